#pragma once

#include "ggsa/dataset.hpp"

namespace ggsa::data {

// Default per-site generator table. Site B images are brighter, noisier and
// lower-contrast than site A, mimicking a second acquisition protocol.
std::map<std::string, SiteParams> default_site_params();

struct PhantomSpec {
    std::uint64_t seed = 1;
    int height = 32;
    int width = 32;
    int slices_per_patient = 8;
    int train_a = 60;
    int test_a = 20;
    int train_b = 0;
    int test_b = 0;
    std::map<std::string, SiteParams> site_params = default_site_params();
};

// Deterministic synthetic cohort: per patient an elliptical brain plus a
// tumour made of 1-3 ellipses whose radii swell and shrink smoothly across
// slices. Ground-truth masks are the exact tumour support.
Dataset generate_phantoms(const PhantomSpec& spec);

// Single-site convenience form: n train patients for one site.
Dataset generate_phantom_dataset(std::uint64_t seed, int n_patients,
                                 int slices_per_patient, Site site, int height,
                                 int width);

} // namespace ggsa::data
