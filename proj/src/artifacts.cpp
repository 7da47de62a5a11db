#include "icf/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "icf/io.hpp"

namespace icf::artifacts {

namespace {

std::string label_or_index(const std::vector<std::string>& labels, std::size_t i) {
    return i < labels.size() ? labels[i] : std::to_string(i);
}

std::string rgb(double r, double g, double b) {
    auto c = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c(r), c(g), c(b));
    return buf;
}

std::string cell_color(double v, double lo, double hi, ColorScale scale) {
    if (!std::isfinite(v)) return "#808080";
    if (scale == ColorScale::diverging) {
        const double limit = std::max(std::fabs(lo), std::fabs(hi));
        const double t = limit > 0.0 ? std::clamp(v / limit, -1.0, 1.0) : 0.0;
        if (t >= 0.0) return rgb(1.0, 1.0 - t, 1.0 - t);
        return rgb(1.0 + t, 1.0 + t, 1.0);
    }
    const double t = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    return rgb(1.0, 1.0 - t, 1.0 - t);
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Plane {
    std::size_t h, w;
    const Tensor* t;
    double at(std::size_t y, std::size_t x) const { return (*t)[y * w + x]; }
};

Plane plane_of(const Tensor& image) {
    const auto& s = image.shape();
    if (s.size() == 2) return {s[0], s[1], &image};
    if (s.size() == 3 && s[0] == 1) return {s[1], s[2], &image};
    throw ShapeError("pgm expects [H x W] or [1 x H x W], got " + format_shape(s));
}

unsigned char gray(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

std::string matrix_csv(const metrics::Matrix& m, const std::string& corner) {
    std::ostringstream os;
    os << corner;
    for (std::size_t c = 0; c < m.cols; ++c) os << ',' << label_or_index(m.col_labels, c);
    os << '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
        os << label_or_index(m.row_labels, r);
        for (std::size_t c = 0; c < m.cols; ++c) os << ',' << format_double(m(r, c));
        os << '\n';
    }
    return os.str();
}

std::string heatmap_svg(const metrics::Matrix& m, const std::string& title, ColorScale scale) {
    constexpr int cell = 56, left = 90, top = 60;
    const int width = left + cell * static_cast<int>(m.cols) + 20;
    const int height = top + cell * static_cast<int>(m.rows) + 20;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (double v : m.data) {
        if (!std::isfinite(v)) continue;
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
        first = false;
    }

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << left << "\" y=\"18\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
    for (std::size_t c = 0; c < m.cols; ++c)
        os << "<text x=\"" << left + cell * int(c) + cell / 2 << "\" y=\"" << top - 8
           << "\" text-anchor=\"middle\">" << xml_escape(label_or_index(m.col_labels, c)) << "</text>\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
        const int y = top + cell * int(r);
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
           << xml_escape(label_or_index(m.row_labels, r)) << "</text>\n";
        for (std::size_t c = 0; c < m.cols; ++c) {
            const int x = left + cell * int(c);
            const double v = m(r, c);
            char value[32];
            std::snprintf(value, sizeof(value), "%.2f", v);
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
               << "\" fill=\"" << cell_color(v, lo, hi, scale) << "\" stroke=\"#cccccc\"/>\n";
            os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
               << value << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::string pgm(const Tensor& image) {
    const Plane p = plane_of(image);
    std::string out = "P5\n" + std::to_string(p.w) + " " + std::to_string(p.h) + "\n255\n";
    for (std::size_t y = 0; y < p.h; ++y)
        for (std::size_t x = 0; x < p.w; ++x) out += static_cast<char>(gray(p.at(y, x)));
    return out;
}

std::string pgm_pair(const Tensor& original, const Tensor& reconstruction, std::size_t scale) {
    const Plane a = plane_of(original), b = plane_of(reconstruction);
    if (a.h != b.h || a.w != b.w) throw ShapeError("pgm_pair: image shapes differ");
    if (scale == 0) scale = 1;
    const std::size_t w = (2 * a.w + 1) * scale, h = a.h * scale;
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t cx = x / scale, cy = y / scale;
            unsigned char v = 128;
            if (cx < a.w) v = gray(a.at(cy, cx));
            else if (cx > a.w) v = gray(b.at(cy, cx - a.w - 1));
            out += static_cast<char>(v);
        }
    return out;
}

}  // namespace icf::artifacts
