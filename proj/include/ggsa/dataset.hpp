#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ggsa/error.hpp"

namespace ggsa::data {

enum class Site { A, B };
enum class Split { Train, Test };

char site_letter(Site site);
Site parse_site(char letter);

std::string format_patient_id(Site site, int ordinal);
std::string format_sample_id(const std::string& patient_id, int slice_index);

// Per-site generator parameters; the values live in the dataset manifest so
// generated data is reproducible from (seed, table).
struct SiteParams {
    double background_mean = 0.0;
    double contrast_lo = 0.0;
    double contrast_hi = 0.0;
    double noise_sigma = 0.0;

    bool operator==(const SiteParams&) const = default;
};

struct DatasetManifest {
    int version = 1;
    int height = 32;
    int width = 32;
    int slices_per_patient = 8;
    std::uint64_t generator_seed = 0;
    std::map<std::string, SiteParams> site_params;        // keyed "A", "B"
    std::map<std::string, std::string> patient_split;     // patient id -> train|test

    bool operator==(const DatasetManifest&) const = default;
};

// One image slice. Images are stored in the normalized intensity scale;
// masks, when present, are binary.
struct Sample {
    std::string sample_id;
    std::string patient_id;
    Site site = Site::A;
    int slice_index = 0;
    std::vector<float> image;          // H*W row-major
    std::vector<std::uint8_t> mask;    // H*W in {0,1}; empty when absent

    bool has_mask() const { return !mask.empty(); }
    bool operator==(const Sample&) const = default;
};

struct Patient {
    std::string id;
    Site site = Site::A;
    Split split = Split::Train;
    std::vector<std::size_t> sample_indices; // contiguous slice order
};

struct AnnotationCost {
    std::int64_t annotated_slices = 0;
    std::int64_t context_views = 0;
};

// Samples grouped by patient plus the runtime annotation state. The sample
// and patient collections are immutable after construction; only the
// annotation set and cost counters change.
class Dataset {
public:
    DatasetManifest manifest;
    std::vector<Sample> samples; // sorted by (patient_id, slice_index)

    void rebuild_index();

    const std::vector<Patient>& patients() const { return patients_; }
    const Patient& patient(const std::string& id) const;
    const Sample& sample(const std::string& id) const;
    std::size_t sample_index(const std::string& id) const;

    std::vector<std::string> patient_ids(Split split) const;
    std::vector<std::string> sample_ids(Split split) const;

    // Ground-truth annotation oracle. Unknown ids raise MissingSample; ids
    // already annotated are no-ops (idempotent). Newly annotated ids add to
    // the cost counter, plus two context views each when count_context is
    // set (the image-wise protocol shows two adjacent slices for reference).
    struct AnnotatedPair {
        std::string sample_id;
        const std::vector<float>* image;
        const std::vector<std::uint8_t>* mask;
    };
    std::vector<AnnotatedPair> oracle_annotate(const std::vector<std::string>& ids,
                                               bool count_context = false);

    bool is_annotated(const std::string& sample_id) const {
        return annotated_.count(sample_id) != 0;
    }
    const std::set<std::string>& annotated_ids() const { return annotated_; }
    const AnnotationCost& cost() const { return cost_; }

private:
    std::vector<Patient> patients_;
    std::unordered_map<std::string, std::size_t> patient_index_;
    std::unordered_map<std::string, std::size_t> sample_index_;
    std::set<std::string> annotated_;
    AnnotationCost cost_;
};

// Merges sub-region label codes {0,1,2,4} into a binary whole-target mask
// (1 wherever the label is nonzero). Any other code is a contract violation.
std::vector<std::uint8_t> whole_tumour_label(const std::vector<int>& label_map);

// Zero-mean unit-variance normalization (population std). Constant images
// are degenerate.
std::vector<double> zscore_normalize(const std::vector<double>& image);

} // namespace ggsa::data
