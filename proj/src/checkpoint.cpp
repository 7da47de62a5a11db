#include "icf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "icf/io.hpp"

namespace icf::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::string_view magic = "ICFCKPT1";

template <class T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                                  std::to_string(pos_));
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const model::ParameterSet& params) {
    std::string out(magic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.group));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.policy));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
        for (auto e : p.value.shape()) put<std::uint64_t>(out, e);
        for (double v : p.value.data()) put<double>(out, v);
    }
    return out;
}

model::ParameterSet deserialize(std::string_view bytes) {
    Reader in(bytes);
    if (in.take(magic.size(), "magic") != magic) throw CheckpointError("not a checkpoint file (bad magic)");
    const auto count = in.get<std::uint32_t>("parameter count");
    model::ParameterSet params;
    for (std::uint32_t i = 0; i < count; ++i) {
        model::Parameter p;
        const auto name_len = in.get<std::uint32_t>("name length");
        p.name = std::string(in.take(name_len, "name"));
        const auto group = in.get<std::uint32_t>("group");
        if (group > static_cast<std::uint32_t>(model::Group::policy))
            throw CheckpointError("invalid parameter group in '" + p.name + "'");
        p.group = static_cast<model::Group>(group);
        p.policy = in.get<std::uint32_t>("policy index");
        const auto rank = in.get<std::uint32_t>("rank");
        if (rank > 8) throw CheckpointError("implausible rank for '" + p.name + "'");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& e : shape) {
            e = in.get<std::uint64_t>("extent");
            if (e == 0 || e > (std::size_t{1} << 32)) throw CheckpointError("invalid extent in '" + p.name + "'");
            n *= e;
        }
        if (n > bytes.size()) throw CheckpointError("checkpoint truncated in values of '" + p.name + "'");
        std::vector<double> values(n);
        for (auto& v : values) v = in.get<double>("values");
        p.value = Tensor(std::move(shape), std::move(values));
        try {
            params.add(std::move(p));
        } catch (const std::invalid_argument& e) {
            throw CheckpointError(e.what());
        }
    }
    if (!in.done()) throw CheckpointError("trailing bytes after checkpoint data");
    return params;
}

void save(const model::ParameterSet& params, const std::filesystem::path& path) { write_file(path, serialize(params)); }

model::ParameterSet load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

void restore(model::Model& m, const model::ParameterSet& saved) {
    auto& params = m.parameters();
    if (saved.size() != params.size())
        throw CheckpointError("checkpoint has " + std::to_string(saved.size()) + " parameters, model expects " +
                              std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& want = params[i];
        const auto& got = saved[i];
        if (want.name != got.name || want.group != got.group || want.policy != got.policy ||
            want.value.shape() != got.value.shape())
            throw CheckpointError("checkpoint parameter '" + got.name + "' " + format_shape(got.value.shape()) +
                                  " does not match model parameter '" + want.name + "' " +
                                  format_shape(want.value.shape()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value = saved[i].value;
}

}  // namespace icf::checkpoint
