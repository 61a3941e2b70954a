#include "ggsa/phantom.hpp"

#include <cmath>

#include "ggsa/rng.hpp"

namespace ggsa::data {

namespace {

struct EllipseGeom {
    double cx, cy, rx, ry, rot;

    // Normalized quadratic; < 1 inside.
    double q(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(rot), s = std::sin(rot);
        const double u = (dx * c + dy * s) / rx;
        const double v = (-dx * s + dy * c) / ry;
        return u * u + v * v;
    }
};

struct PatientGeometry {
    EllipseGeom brain;
    double texture_amp;
    double contrast_u; // mapped through the site contrast range
    int n_components;
    EllipseGeom comp[3];
    double peak_slice;
    double half_width;
};

// Geometry is a function of (seed, global ordinal) only, so two datasets
// generated with the same seed but different site tables contain the same
// anatomy under different intensity statistics.
PatientGeometry draw_geometry(Rng& rng, int hw, int slices) {
    PatientGeometry g{};
    const double c = hw / 2.0;
    g.brain.cx = c + rng.uniform(-1.5, 1.5);
    g.brain.cy = c + rng.uniform(-1.5, 1.5);
    g.brain.rx = hw * rng.uniform(0.34, 0.42);
    g.brain.ry = hw * rng.uniform(0.30, 0.38);
    g.brain.rot = rng.uniform(0.0, 3.14159265358979);
    g.texture_amp = rng.uniform(0.15, 0.45);
    g.contrast_u = rng.next_double();
    g.n_components = 1 + static_cast<int>(rng.next_below(3));
    for (auto& comp : g.comp) { // always draw 3 to keep the stream aligned
        const double frac = rng.uniform(0.0, 0.5);
        const double angle = rng.uniform(0.0, 6.28318530717959);
        comp.cx = g.brain.cx + frac * g.brain.rx * std::cos(angle);
        comp.cy = g.brain.cy + frac * g.brain.ry * std::sin(angle);
        comp.rx = hw * rng.uniform(0.07, 0.17);
        comp.ry = hw * rng.uniform(0.07, 0.17);
        comp.rot = rng.uniform(0.0, 3.14159265358979);
    }
    g.peak_slice = rng.uniform(0.25, 0.75) * (slices - 1);
    g.half_width = rng.uniform(0.6, 0.9) * slices;
    return g;
}

void emit_patient(Dataset& ds, const PhantomSpec& spec, Site site, int site_index,
                  int global_ordinal, Split split) {
    const auto& params = spec.site_params.at(std::string(1, site_letter(site)));
    Rng rng(derive_seed(spec.seed, 1000003ull + static_cast<std::uint64_t>(global_ordinal)));
    const int hw = spec.height; // square slices
    PatientGeometry g = draw_geometry(rng, hw, spec.slices_per_patient);
    const double contrast =
        params.contrast_lo + (params.contrast_hi - params.contrast_lo) * g.contrast_u;

    const std::string pid = format_patient_id(site, site_index);
    ds.manifest.patient_split[pid] = split == Split::Test ? "test" : "train";

    for (int s = 0; s < spec.slices_per_patient; ++s) {
        // radius scale^2 is a clipped downward parabola in the slice index,
        // so the tumour cross-section area is unimodal across slices
        const double rel = (s - g.peak_slice) / g.half_width;
        const double scale_sq = std::max(0.0, 1.0 - rel * rel);

        Sample sample;
        sample.patient_id = pid;
        sample.sample_id = format_sample_id(pid, s);
        sample.site = site;
        sample.slice_index = s;
        sample.image.resize(static_cast<std::size_t>(spec.height) * spec.width);
        sample.mask.assign(sample.image.size(), 0);

        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const std::size_t idx = static_cast<std::size_t>(y) * spec.width + x;
                const double qb = g.brain.q(x, y);
                double value = params.background_mean;
                value += qb < 1.0 ? g.texture_amp * (1.0 - qb) : -0.55;

                double tumour = 0.0;
                bool inside = false;
                if (scale_sq > 1e-9) {
                    for (int k = 0; k < g.n_components; ++k) {
                        const double qs = g.comp[k].q(x, y) / scale_sq;
                        if (qs < 1.0) {
                            inside = true;
                            tumour = std::max(tumour, std::min(1.0, (1.0 - qs) / 0.35));
                        }
                    }
                }
                value += contrast * tumour;
                value += params.noise_sigma * rng.next_gaussian();
                sample.image[idx] = static_cast<float>(value);
                sample.mask[idx] = inside ? 1 : 0;
            }
        }
        ds.samples.push_back(std::move(sample));
    }
}

} // namespace

std::map<std::string, SiteParams> default_site_params() {
    return {
        {"A", SiteParams{0.30, 0.30, 1.50, 0.10}},
        {"B", SiteParams{0.60, 0.22, 1.05, 0.14}},
    };
}

Dataset generate_phantoms(const PhantomSpec& spec) {
    if (spec.height % 4 != 0 || spec.width % 4 != 0 || spec.height < 8 || spec.width < 8) {
        fail(ErrorKind::Dimension, "phantom dims must be multiples of 4 and at least 8");
    }
    if (spec.height != spec.width) {
        fail(ErrorKind::Dimension, "phantom slices are square");
    }
    if (spec.slices_per_patient < 1) {
        fail(ErrorKind::Contract, "slices_per_patient must be >= 1");
    }
    if (spec.train_a + spec.test_a + spec.train_b + spec.test_b < 1) {
        fail(ErrorKind::Contract, "at least one patient is required");
    }

    Dataset ds;
    ds.manifest.version = 1;
    ds.manifest.height = spec.height;
    ds.manifest.width = spec.width;
    ds.manifest.slices_per_patient = spec.slices_per_patient;
    ds.manifest.generator_seed = spec.seed;
    ds.manifest.site_params = spec.site_params;

    int ordinal = 0;
    for (int i = 0; i < spec.train_a; ++i, ++ordinal)
        emit_patient(ds, spec, Site::A, i, ordinal, Split::Train);
    for (int i = 0; i < spec.test_a; ++i, ++ordinal)
        emit_patient(ds, spec, Site::A, spec.train_a + i, ordinal, Split::Test);
    for (int i = 0; i < spec.train_b; ++i, ++ordinal)
        emit_patient(ds, spec, Site::B, i, ordinal, Split::Train);
    for (int i = 0; i < spec.test_b; ++i, ++ordinal)
        emit_patient(ds, spec, Site::B, spec.train_b + i, ordinal, Split::Test);

    ds.rebuild_index();
    return ds;
}

Dataset generate_phantom_dataset(std::uint64_t seed, int n_patients,
                                 int slices_per_patient, Site site, int height,
                                 int width) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.height = height;
    spec.width = width;
    spec.slices_per_patient = slices_per_patient;
    spec.train_a = site == Site::A ? n_patients : 0;
    spec.test_a = 0;
    spec.train_b = site == Site::B ? n_patients : 0;
    spec.test_b = 0;
    return generate_phantoms(spec);
}

} // namespace ggsa::data
