#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "fusionlab/errors.hpp"
#include "fusionlab/fusion_model.hpp"

static_assert(std::endian::native == std::endian::little,
              "model file format assumes a little-endian host");

namespace fusionlab {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'A', 'B'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw FormatError("model file: truncated");
    return v;
}
std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw FormatError("model file: truncated");
    return v;
}
double read_f64(std::istream& in) {
    double v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw FormatError("model file: truncated");
    return v;
}

void write_tensor(std::ostream& out, const Matrix& t) {
    write_u64(out, t.rows());
    write_u64(out, t.cols());
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_tensor(std::istream& in, Matrix& t, const std::string& name) {
    std::uint64_t rows = read_u64(in);
    std::uint64_t cols = read_u64(in);
    if (rows != t.rows() || cols != t.cols()) {
        throw FormatError("model file: tensor '" + name + "' has shape " + std::to_string(rows) +
                          "x" + std::to_string(cols) + ", expected " + t.shape_str());
    }
    in.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw FormatError("model file: truncated in tensor '" + name + "'");
}

}  // namespace

void save_model(const FusionModel& m, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("model file: cannot open '" + tmp + "' for writing");

        out.write(kMagic, sizeof(kMagic));
        write_u32(out, kVersion);
        write_u32(out, m.mode == RunMode::Train ? 0u : 1u);
        write_u64(out, m.cfg.d);
        write_u64(out, m.cfg.layers);
        write_u64(out, m.cfg.heads);
        write_u64(out, m.cfg.ff_mult);
        write_u64(out, m.cfg.d_text);
        write_u64(out, m.cfg.d_image);
        write_f64(out, m.cfg.dropout);

        for (const auto& [name, t] : m.param_refs()) write_tensor(out, *t);
        for (const auto& [name, t] : m.state_refs()) write_tensor(out, *t);
        if (!out) throw IoError("model file: write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("model file: rename to '" + path + "' failed: " + ec.message());
}

FusionModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("model file: cannot open '" + path + "' for reading");

    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("model file: bad magic bytes in '" + path + "'");
    }
    std::uint32_t version = read_u32(in);
    if (version != kVersion) {
        throw FormatError("model file: unsupported version " + std::to_string(version));
    }
    std::uint32_t mode = read_u32(in);
    if (mode > 1) throw FormatError("model file: bad mode flag");

    ArchConfig cfg;
    cfg.d = read_u64(in);
    cfg.layers = read_u64(in);
    cfg.heads = read_u64(in);
    cfg.ff_mult = read_u64(in);
    cfg.d_text = read_u64(in);
    cfg.d_image = read_u64(in);
    cfg.dropout = read_f64(in);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("model file: invalid config: ") + e.what());
    }

    SeededRng zero(0);
    FusionModel m = init_model(cfg, zero);
    m.mode = mode == 0 ? RunMode::Train : RunMode::Eval;
    for (auto& [name, t] : m.param_refs()) read_tensor(in, *t, name);
    for (auto& [name, t] : m.state_refs()) read_tensor(in, *t, name);

    // The payload must end exactly here.
    char extra;
    if (in.read(&extra, 1)) throw FormatError("model file: trailing bytes after tensors");
    return m;
}

}  // namespace fusionlab
