#include "ggsa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ggsa::data {

char site_letter(Site site) { return site == Site::A ? 'A' : 'B'; }

Site parse_site(char letter) {
    if (letter == 'A') return Site::A;
    if (letter == 'B') return Site::B;
    fail(ErrorKind::Contract, std::string("unknown site '") + letter + "'");
}

std::string format_patient_id(Site site, int ordinal) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%c%03d", site_letter(site), ordinal);
    return buf;
}

std::string format_sample_id(const std::string& patient_id, int slice_index) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "_%02d", slice_index);
    return patient_id + buf;
}

void Dataset::rebuild_index() {
    std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
        if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
        return a.slice_index < b.slice_index;
    });

    patients_.clear();
    patient_index_.clear();
    sample_index_.clear();

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        if (sample_index_.count(s.sample_id)) {
            fail(ErrorKind::Contract, "duplicate sample id " + s.sample_id);
        }
        sample_index_[s.sample_id] = i;
        auto it = patient_index_.find(s.patient_id);
        if (it == patient_index_.end()) {
            auto split_it = manifest.patient_split.find(s.patient_id);
            if (split_it == manifest.patient_split.end()) {
                fail(ErrorKind::Format, "patient " + s.patient_id + " missing from split map");
            }
            Patient p;
            p.id = s.patient_id;
            p.site = s.site;
            p.split = split_it->second == "test" ? Split::Test : Split::Train;
            patient_index_[p.id] = patients_.size();
            patients_.push_back(std::move(p));
        }
        patients_[patient_index_[s.patient_id]].sample_indices.push_back(i);
    }

    for (const auto& p : patients_) {
        for (std::size_t k = 0; k < p.sample_indices.size(); ++k) {
            if (samples[p.sample_indices[k]].slice_index != static_cast<int>(k)) {
                fail(ErrorKind::Format, "patient " + p.id + " has non-contiguous slices");
            }
        }
    }
}

const Patient& Dataset::patient(const std::string& id) const {
    auto it = patient_index_.find(id);
    if (it == patient_index_.end()) fail(ErrorKind::MissingSample, "unknown patient " + id);
    return patients_[it->second];
}

const Sample& Dataset::sample(const std::string& id) const {
    return samples[sample_index(id)];
}

std::size_t Dataset::sample_index(const std::string& id) const {
    auto it = sample_index_.find(id);
    if (it == sample_index_.end()) fail(ErrorKind::MissingSample, "unknown sample " + id);
    return it->second;
}

std::vector<std::string> Dataset::patient_ids(Split split) const {
    std::vector<std::string> ids;
    for (const auto& p : patients_)
        if (p.split == split) ids.push_back(p.id);
    return ids;
}

std::vector<std::string> Dataset::sample_ids(Split split) const {
    std::vector<std::string> ids;
    for (const auto& p : patients_)
        if (p.split == split)
            for (std::size_t idx : p.sample_indices) ids.push_back(samples[idx].sample_id);
    return ids;
}

std::vector<Dataset::AnnotatedPair> Dataset::oracle_annotate(
    const std::vector<std::string>& ids, bool count_context) {
    std::vector<AnnotatedPair> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const Sample& s = sample(id);
        if (!s.has_mask()) {
            fail(ErrorKind::Contract, "sample " + id + " has no ground truth to annotate");
        }
        if (!annotated_.count(id)) {
            annotated_.insert(id);
            cost_.annotated_slices += 1;
            if (count_context) cost_.context_views += 2;
        }
        out.push_back({s.sample_id, &s.image, &s.mask});
    }
    return out;
}

std::vector<std::uint8_t> whole_tumour_label(const std::vector<int>& label_map) {
    std::vector<std::uint8_t> mask(label_map.size());
    for (std::size_t i = 0; i < label_map.size(); ++i) {
        const int v = label_map[i];
        if (v != 0 && v != 1 && v != 2 && v != 4) {
            fail(ErrorKind::Contract,
                 "unexpected label value " + std::to_string(v) + " at index " +
                     std::to_string(i));
        }
        mask[i] = v != 0 ? 1 : 0;
    }
    return mask;
}

std::vector<double> zscore_normalize(const std::vector<double>& image) {
    if (image.empty()) fail(ErrorKind::EmptyInput, "cannot normalize an empty image");
    double mean = 0.0;
    for (double v : image) mean += v;
    mean /= static_cast<double>(image.size());
    double var = 0.0;
    for (double v : image) var += (v - mean) * (v - mean);
    var /= static_cast<double>(image.size());
    if (var <= 0.0) {
        fail(ErrorKind::DegenerateInput, "constant image has no variance to normalize");
    }
    const double inv_std = 1.0 / std::sqrt(var);
    std::vector<double> out(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) out[i] = (image[i] - mean) * inv_std;
    return out;
}

} // namespace ggsa::data
