#include "ssin/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ssin/error.hpp"

namespace ssin::model {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) {
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

class Writer {
public:
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
    void str32(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    std::vector<std::uint8_t>& data() { return out_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::string str32() { return str(u32()); }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw ChecksumError("checkpoint: unexpected end of data");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(std::string(kCheckpointMagic, sizeof kCheckpointMagic));
    w.u32(kCheckpointVersion);
    w.str32(nlohmann::json(ckpt.config).dump());
    const auto& s = ckpt.stats;
    for (double v : {s.relpos.distance.mean, s.relpos.distance.std, s.relpos.azimuth.mean, s.relpos.azimuth.std,
                     s.coords.lat.mean, s.coords.lat.std, s.coords.lon.mean, s.coords.lon.std}) {
        w.f64(v);
    }
    w.str32(ckpt.metadata.dump());
    w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
    for (std::size_t k = 0; k < ckpt.params.size(); ++k) {
        const auto& name = ckpt.params.name(k);
        const auto& m = ckpt.params[k];
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name);
        w.u32(static_cast<std::uint32_t>(m.rows()));
        w.u32(static_cast<std::uint32_t>(m.cols()));
        for (Index t = 0; t < m.size(); ++t) w.f64(m.data()[t]);  // row-major storage
    }
    auto& out = w.data();
    const auto h = fnv1a64(out);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(h >> (8 * i)));
    return out;
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof kCheckpointMagic + 4 + 8) throw ChecksumError("checkpoint: file too short");
    const auto body = bytes.first(bytes.size() - 8);
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body.size() + static_cast<std::size_t>(i)]) << (8 * i);
    if (fnv1a64(body) != stored) throw ChecksumError("checkpoint: checksum mismatch (corrupt or truncated file)");

    Reader r(body);
    if (r.str(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
        throw VersionError("checkpoint: bad magic bytes");
    }
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint: unsupported format version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.config = nlohmann::json::parse(r.str32()).get<ModelConfig>();
    auto& s = ckpt.stats;
    s.relpos.distance.mean = r.f64();
    s.relpos.distance.std = r.f64();
    s.relpos.azimuth.mean = r.f64();
    s.relpos.azimuth.std = r.f64();
    s.coords.lat.mean = r.f64();
    s.coords.lat.std = r.f64();
    s.coords.lon.mean = r.f64();
    s.coords.lon.std = r.f64();
    ckpt.metadata = nlohmann::json::parse(r.str32());

    ckpt.params = ModelParams(ckpt.config);
    const auto count = r.u32();
    if (count != ckpt.params.size()) {
        throw ShapeError("checkpoint: " + std::to_string(count) + " tensors stored, configuration needs " +
                         std::to_string(ckpt.params.size()));
    }
    for (std::size_t k = 0; k < count; ++k) {
        const auto name = r.str(r.u16());
        const auto rows = static_cast<Index>(r.u32());
        const auto cols = static_cast<Index>(r.u32());
        const auto& spec = ckpt.params.spec(k);
        if (name != spec.name || rows != spec.rows || cols != spec.cols) {
            throw ShapeError("checkpoint: tensor '" + name + "' (" + std::to_string(rows) + "x" +
                             std::to_string(cols) + ") does not match expected '" + spec.name + "' (" +
                             std::to_string(spec.rows) + "x" + std::to_string(spec.cols) + ")");
        }
        auto& m = ckpt.params[k];
        for (Index t = 0; t < m.size(); ++t) m.data()[t] = r.f64();
    }
    if (!r.done()) throw ShapeError("checkpoint: trailing bytes after tensors");
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const auto bytes = serialize(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
    auto ckpt = load_checkpoint(path);
    if (!(ckpt.config == expected)) {
        const auto a = parameter_layout(ckpt.config);
        const auto b = parameter_layout(expected);
        std::string detail;
        if (a.size() != b.size()) {
            detail = std::to_string(a.size()) + " tensors vs " + std::to_string(b.size());
        } else {
            for (std::size_t k = 0; k < a.size() && detail.empty(); ++k) {
                if (a[k].name != b[k].name || a[k].rows != b[k].rows || a[k].cols != b[k].cols) {
                    detail = a[k].name + " " + std::to_string(a[k].rows) + "x" + std::to_string(a[k].cols) +
                             " vs " + b[k].name + " " + std::to_string(b[k].rows) + "x" + std::to_string(b[k].cols);
                }
            }
        }
        throw ShapeError("checkpoint configuration does not match the requested model" +
                         (detail.empty() ? std::string() : ": " + detail));
    }
    return ckpt;
}

}  // namespace ssin::model
