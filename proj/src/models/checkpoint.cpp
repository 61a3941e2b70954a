#include "ggsa/checkpoint.hpp"

#include <map>
#include <variant>

#include "../io/binio.hpp"

namespace ggsa::models {

namespace {

using ArchValue = std::variant<std::int64_t, double, std::string>;
using ArchBlock = std::vector<std::pair<std::string, ArchValue>>;

constexpr char kMagic[4] = {'G', 'G', 'M', 'D'};

void write_checkpoint(const std::string& path, const ArchBlock& arch,
                      const ParamStore& params) {
    io::ByteWriter w;
    w.raw(kMagic, 4);
    w.u32(kCheckpointVersion);

    w.u32(static_cast<std::uint32_t>(arch.size()));
    for (const auto& [key, value] : arch) {
        w.str(key);
        if (std::holds_alternative<std::int64_t>(value)) {
            w.u8('i');
            w.i64(std::get<std::int64_t>(value));
        } else if (std::holds_alternative<double>(value)) {
            w.u8('d');
            w.f64(std::get<double>(value));
        } else {
            w.u8('s');
            w.str(std::get<std::string>(value));
        }
    }

    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params.items()) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t->shape.size()));
        for (int e : t->shape) w.u32(static_cast<std::uint32_t>(e));
        for (double v : t->values) w.f64(v);
    }
    w.finish_to_file(path);
}

struct Checkpoint {
    ArchBlock arch;
    ParamStore params;

    std::int64_t arch_int(const std::string& key) const {
        for (const auto& [k, v] : arch)
            if (k == key && std::holds_alternative<std::int64_t>(v))
                return std::get<std::int64_t>(v);
        fail(ErrorKind::Format, "checkpoint missing integer field " + key);
    }
    std::string arch_str(const std::string& key) const {
        for (const auto& [k, v] : arch)
            if (k == key && std::holds_alternative<std::string>(v))
                return std::get<std::string>(v);
        fail(ErrorKind::Format, "checkpoint missing string field " + key);
    }
};

Checkpoint read_checkpoint(const std::string& path) {
    auto r = io::ByteReader::from_file(path);
    r.check_crc();

    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        fail(ErrorKind::Format, path + ": bad magic at offset 0");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        fail(ErrorKind::Format, path + ": unsupported checkpoint version " +
                                    std::to_string(version));
    }

    Checkpoint ck;
    const std::uint32_t nfields = r.u32();
    for (std::uint32_t i = 0; i < nfields; ++i) {
        std::string key = r.str();
        const std::uint8_t tag = r.u8();
        switch (tag) {
            case 'i': ck.arch.emplace_back(std::move(key), ArchValue(r.i64())); break;
            case 'd': ck.arch.emplace_back(std::move(key), ArchValue(r.f64())); break;
            case 's': ck.arch.emplace_back(std::move(key), ArchValue(r.str())); break;
            default:
                fail(ErrorKind::Format, path + ": unknown field tag at offset " +
                                            std::to_string(r.offset() - 1));
        }
    }

    const std::uint32_t nparams = r.u32();
    for (std::uint32_t i = 0; i < nparams; ++i) {
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        ad::Shape shape(rank);
        for (auto& e : shape) e = static_cast<int>(r.u32());
        const auto n = static_cast<std::size_t>(ad::numel(shape));
        std::vector<double> values(n);
        for (auto& v : values) v = r.f64();
        ck.params.add(name, ad::Tensor::make(std::move(shape), std::move(values), true));
    }
    if (!r.exhausted()) {
        fail(ErrorKind::Format, path + ": trailing bytes at offset " +
                                    std::to_string(r.offset()));
    }
    return ck;
}

// Transfers checkpoint tensors into a freshly initialized model, enforcing
// an exact name/shape match.
void adopt_params(ParamStore& dst, ParamStore&& src, const std::string& path) {
    if (dst.size() != src.size()) {
        fail(ErrorKind::Format, path + ": parameter count mismatch");
    }
    for (auto& [name, t] : dst.items()) {
        if (!src.contains(name)) fail(ErrorKind::Format, path + ": missing parameter " + name);
        auto& loaded = src.at(name);
        if (loaded->shape != t->shape) {
            fail(ErrorKind::Format, path + ": shape mismatch for " + name);
        }
        t = loaded;
    }
}

} // namespace

void save_vae(const std::string& path, const VaeModel& model) {
    ArchBlock arch{
        {"kind", std::string("vae")},
        {"latent_dim", static_cast<std::int64_t>(model.cfg.latent_dim)},
        {"image_hw", static_cast<std::int64_t>(model.cfg.image_hw)},
    };
    write_checkpoint(path, arch, model.params);
}

VaeModel load_vae(const std::string& path) {
    auto ck = read_checkpoint(path);
    if (ck.arch_str("kind") != "vae") {
        fail(ErrorKind::Format, path + ": not a VAE checkpoint");
    }
    VaeConfig cfg;
    cfg.latent_dim = static_cast<int>(ck.arch_int("latent_dim"));
    cfg.image_hw = static_cast<int>(ck.arch_int("image_hw"));
    VaeModel model = VaeModel::init(cfg, 0);
    adopt_params(model.params, std::move(ck.params), path);
    return model;
}

void save_segmenter(const std::string& path, const SegModel& model) {
    ArchBlock arch{
        {"kind", std::string("unet")},
        {"base_channels", static_cast<std::int64_t>(model.cfg.base_channels)},
        {"depth", static_cast<std::int64_t>(model.cfg.depth)},
    };
    write_checkpoint(path, arch, model.params);
}

SegModel load_segmenter(const std::string& path) {
    auto ck = read_checkpoint(path);
    if (ck.arch_str("kind") != "unet") {
        fail(ErrorKind::Format, path + ": not a segmenter checkpoint");
    }
    UnetConfig cfg;
    cfg.base_channels = static_cast<int>(ck.arch_int("base_channels"));
    cfg.depth = static_cast<int>(ck.arch_int("depth"));
    SegModel model = SegModel::init(cfg, 0);
    adopt_params(model.params, std::move(ck.params), path);
    return model;
}

} // namespace ggsa::models
