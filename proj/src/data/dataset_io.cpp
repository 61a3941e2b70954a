#include "ggsa/dataset_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "../io/binio.hpp"

namespace ggsa::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'G', 'G', 'A', 'S'};

void write_slice(const Sample& s, int h, int w, const std::string& path) {
    io::ByteWriter out;
    out.raw(kMagic, 4);
    out.u32(kSliceFormatVersion);
    out.u32(static_cast<std::uint32_t>(h));
    out.u32(static_cast<std::uint32_t>(w));
    for (float v : s.image) out.f32(v);
    out.u8(s.has_mask() ? 1 : 0);
    if (s.has_mask()) out.raw(s.mask.data(), s.mask.size());
    out.finish_to_file(path);
}

Sample read_slice(const std::string& path, const std::string& patient_id,
                  int slice_index, int h, int w) {
    auto r = io::ByteReader::from_file(path);
    r.check_crc();

    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        fail(ErrorKind::Format, path + ": bad magic at offset 0");
    }
    const std::uint32_t version = r.u32();
    if (version != kSliceFormatVersion) {
        fail(ErrorKind::Format, path + ": unsupported version " + std::to_string(version) +
                                    " at offset 4");
    }
    const auto fh = static_cast<int>(r.u32());
    const auto fw = static_cast<int>(r.u32());
    if (fh != h || fw != w) {
        fail(ErrorKind::Format, path + ": slice extent " + std::to_string(fh) + "x" +
                                    std::to_string(fw) + " does not match manifest");
    }

    Sample s;
    s.patient_id = patient_id;
    s.sample_id = format_sample_id(patient_id, slice_index);
    s.site = parse_site(patient_id.at(0));
    s.slice_index = slice_index;
    s.image.resize(static_cast<std::size_t>(h) * w);
    for (auto& v : s.image) v = r.f32();
    const std::uint8_t flag = r.u8();
    if (flag > 1) {
        fail(ErrorKind::Format, path + ": invalid mask flag at offset " +
                                    std::to_string(r.offset() - 1));
    }
    if (flag == 1) {
        s.mask.resize(s.image.size());
        r.raw(s.mask.data(), s.mask.size());
        for (auto m : s.mask) {
            if (m > 1) fail(ErrorKind::Format, path + ": mask byte out of {0,1}");
        }
    }
    if (!r.exhausted()) {
        fail(ErrorKind::Format, path + ": trailing bytes at offset " +
                                    std::to_string(r.offset()));
    }
    return s;
}

} // namespace

void write_dataset(const Dataset& dataset, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Filesystem, "cannot create directory " + dir);

    json site_params = json::object();
    for (const auto& [name, p] : dataset.manifest.site_params) {
        site_params[name] = {
            {"background_mean", p.background_mean},
            {"contrast_lo", p.contrast_lo},
            {"contrast_hi", p.contrast_hi},
            {"noise_sigma", p.noise_sigma},
        };
    }
    json manifest = {
        {"version", dataset.manifest.version},
        {"height", dataset.manifest.height},
        {"width", dataset.manifest.width},
        {"slices_per_patient", dataset.manifest.slices_per_patient},
        {"generator_seed", dataset.manifest.generator_seed},
        {"site_params", site_params},
        {"patient_split", dataset.manifest.patient_split},
    };
    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!mf) fail(ErrorKind::Filesystem, "cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
    mf.close();

    for (const auto& s : dataset.samples) {
        write_slice(s, dataset.manifest.height, dataset.manifest.width,
                    (fs::path(dir) / (s.sample_id + ".ggs")).string());
    }
}

Dataset read_dataset(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    if (!fs::exists(manifest_path)) {
        fail(ErrorKind::Format, dir + ": missing manifest.json");
    }
    std::ifstream mf(manifest_path);
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, manifest_path.string() + ": " + e.what());
    }

    Dataset ds;
    try {
        ds.manifest.version = manifest.at("version").get<int>();
        if (ds.manifest.version != 1) {
            fail(ErrorKind::Format, dir + ": unsupported dataset version " +
                                        std::to_string(ds.manifest.version));
        }
        ds.manifest.height = manifest.at("height").get<int>();
        ds.manifest.width = manifest.at("width").get<int>();
        ds.manifest.slices_per_patient = manifest.at("slices_per_patient").get<int>();
        ds.manifest.generator_seed = manifest.at("generator_seed").get<std::uint64_t>();
        for (const auto& [name, p] : manifest.at("site_params").items()) {
            SiteParams sp;
            sp.background_mean = p.at("background_mean").get<double>();
            sp.contrast_lo = p.at("contrast_lo").get<double>();
            sp.contrast_hi = p.at("contrast_hi").get<double>();
            sp.noise_sigma = p.at("noise_sigma").get<double>();
            ds.manifest.site_params[name] = sp;
        }
        ds.manifest.patient_split =
            manifest.at("patient_split").get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, manifest_path.string() + ": " + e.what());
    }

    for (const auto& [pid, split] : ds.manifest.patient_split) {
        if (split != "train" && split != "test") {
            fail(ErrorKind::Format, dir + ": patient " + pid + " has unknown split " + split);
        }
        for (int s = 0; s < ds.manifest.slices_per_patient; ++s) {
            const fs::path slice_path = fs::path(dir) / (format_sample_id(pid, s) + ".ggs");
            if (!fs::exists(slice_path)) {
                fail(ErrorKind::Format, dir + ": missing slice file " +
                                            slice_path.filename().string());
            }
            ds.samples.push_back(
                read_slice(slice_path.string(), pid, s, ds.manifest.height,
                           ds.manifest.width));
        }
    }
    ds.rebuild_index();
    return ds;
}

} // namespace ggsa::data
