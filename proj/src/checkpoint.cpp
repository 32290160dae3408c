#include "sama/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sama {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}
    template <typename T>
    void pod(T v) {
        os_.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    void str32(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void doubles(std::span<const double> v) {
        os_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }

private:
    std::ostream& os_;
};

class Reader {
public:
    Reader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}
    template <typename T>
    T pod() {
        T v{};
        read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    std::string str(std::uint64_t n) {
        if (n > (1u << 30)) fail("implausible string length");
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }
    std::vector<double> doubles(std::size_t n) {
        std::vector<double> v(n);
        read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
        return v;
    }
    [[noreturn]] void fail(const std::string& what) const { throw CheckpointError(source_ + ": " + what); }

private:
    void read(char* dst, std::size_t n) {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) fail("truncated checkpoint");
    }
    std::istream& is_;
    std::string source_;
};

}  // namespace

Checkpoint snapshot(const ParamStore& store, std::string config_json, std::uint64_t step) {
    Checkpoint c{std::move(config_json), step, {}, std::nullopt};
    for (const auto& e : store.entries()) {
        const auto d = e.value.data();
        c.params.push_back({e.name, e.trainable, e.value.shape(), {d.begin(), d.end()}});
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ostringstream buf(std::ios::binary);
    Writer w(buf);
    buf.write(kCheckpointMagic, sizeof kCheckpointMagic);
    w.pod(kCheckpointVersion);
    w.pod(static_cast<std::uint64_t>(ckpt.config_json.size()));
    buf.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));
    w.pod(ckpt.step);
    w.pod(static_cast<std::uint64_t>(ckpt.params.size()));
    for (const auto& p : ckpt.params) {
        if (p.values.size() != numel_of(p.shape)) throw CheckpointError("parameter " + p.name + " has inconsistent size");
        w.str32(p.name);
        w.pod(static_cast<std::uint8_t>(p.trainable));
        w.pod(static_cast<std::uint32_t>(p.shape.size()));
        for (auto d : p.shape) w.pod(static_cast<std::uint64_t>(d));
        w.doubles(p.values);
    }
    w.pod(static_cast<std::uint8_t>(ckpt.optimizer.has_value()));
    if (ckpt.optimizer) {
        w.pod(static_cast<std::uint64_t>(ckpt.optimizer->size()));
        for (const auto& a : *ckpt.optimizer) {
            w.str32(a.name);
            w.pod(a.updates);
            w.pod(static_cast<std::uint64_t>(a.m.size()));
            w.doubles(a.m);
            w.doubles(a.v);
        }
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path.string());
    const std::string bytes = buf.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    Reader r(in, path.string());
    char magic[sizeof kCheckpointMagic];
    in.read(magic, sizeof magic);
    if (in.gcount() != sizeof magic || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        r.fail("not a checkpoint file");
    if (const auto v = r.pod<std::uint32_t>(); v != kCheckpointVersion)
        r.fail("unsupported checkpoint version " + std::to_string(v));
    Checkpoint c;
    c.config_json = r.str(r.pod<std::uint64_t>());
    c.step = r.pod<std::uint64_t>();
    const auto count = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        ParamRecord p;
        p.name = r.str(r.pod<std::uint32_t>());
        p.trainable = r.pod<std::uint8_t>() != 0;
        const auto ndim = r.pod<std::uint32_t>();
        if (ndim > 8) r.fail("parameter " + p.name + " has implausible rank");
        for (std::uint32_t k = 0; k < ndim; ++k) p.shape.push_back(r.pod<std::uint64_t>());
        if (numel_of(p.shape) > (std::size_t{1} << 28)) r.fail("parameter " + p.name + " is implausibly large");
        p.values = r.doubles(numel_of(p.shape));
        c.params.push_back(std::move(p));
    }
    if (r.pod<std::uint8_t>()) {
        std::vector<AdamMoments> opt;
        const auto n = r.pod<std::uint64_t>();
        for (std::uint64_t i = 0; i < n; ++i) {
            AdamMoments a;
            a.name = r.str(r.pod<std::uint32_t>());
            a.updates = r.pod<std::uint64_t>();
            const auto len = r.pod<std::uint64_t>();
            if (len > (std::uint64_t{1} << 28)) r.fail("implausible optimizer state size");
            a.m = r.doubles(len);
            a.v = r.doubles(len);
            opt.push_back(std::move(a));
        }
        c.optimizer = std::move(opt);
    }
    return c;
}

void restore(ParamStore& store, const Checkpoint& ckpt) {
    if (ckpt.params.size() != store.entries().size())
        throw CheckpointError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                              std::to_string(store.entries().size()));
    for (const auto& p : ckpt.params) {
        if (!store.contains(p.name)) throw CheckpointError("unknown parameter " + p.name);
        Tensor t = store.get(p.name);
        if (t.shape() != p.shape)
            throw CheckpointError("parameter " + p.name + ": checkpoint shape " + shape_str(p.shape) + " vs model " +
                                  shape_str(t.shape()));
        if (t.requires_grad() != p.trainable) throw CheckpointError("parameter " + p.name + ": trainable flag differs");
        auto dst = t.mutable_data();
        std::copy(p.values.begin(), p.values.end(), dst.begin());
    }
}

std::string serialize_params(const ParamStore& store, const std::vector<std::string>& prefixes) {
    std::ostringstream buf(std::ios::binary);
    Writer w(buf);
    for (const auto& e : store.entries()) {
        const bool match = std::any_of(prefixes.begin(), prefixes.end(),
                                       [&](const std::string& p) { return e.name.rfind(p, 0) == 0; });
        if (!match) continue;
        w.str32(e.name);
        w.doubles(e.value.data());
    }
    return buf.str();
}

}  // namespace sama
