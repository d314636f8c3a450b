#pragma once

// Baseline linear classifier: hinge-loss subgradient descent with L2
// regularization over relative-power / differential-entropy feature vectors.
// Serves as a dependency-free reference point for the convolutional models.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsception/data.hpp"
#include "tsception/dsp.hpp"

namespace tsception {

enum class FeatureKind { rp, de, both };

std::string feature_kind_name(FeatureKind kind);
FeatureKind feature_kind_from_name(const std::string& name);  // throws ConfigError

// One feature row per segment: a relative-power block and a differential-
// entropy block, plus the label and provenance carried along.
struct FeatureMatrix {
    int rp_width = 0;
    int de_width = 0;
    std::vector<double> rp;  // rows x rp_width, row-major
    std::vector<double> de;  // rows x de_width, row-major
    std::vector<int> labels;
    std::vector<SegmentProvenance> provenance;

    long rows() const { return static_cast<long>(labels.size()); }
    int width(FeatureKind kind) const;
    // the selected blocks of row i: rp, de, or their concatenation
    std::vector<double> row(FeatureKind kind, long i) const;
    std::vector<std::vector<double>> feature_rows(FeatureKind kind) const;
};

// Runs the band-power feature extractor over every segment of a set.
FeatureMatrix features_from_segments(const SegmentSet& set, int fs,
                                     const std::vector<std::string>& channel_names);

// Reads the feature CSV written by the feature extractor. The stimulus column
// must carry the class names ("low"/"high"). Throws FormatError on malformed
// input.
FeatureMatrix load_feature_csv(std::istream& is, const std::string& origin);
FeatureMatrix load_feature_csv(const std::filesystem::path& path);

struct LinearModel {
    FeatureKind feature_kind = FeatureKind::de;
    std::vector<double> weights;
    double bias = 0.0;
    // per-feature standardization statistics, frozen from the training set
    std::vector<double> mean;
    std::vector<double> stddev;

    int dim() const { return static_cast<int>(weights.size()); }
    // sizes consistent, statistics finite, stddev > 0
    void validate() const;
};

// Trains by hinge-loss subgradient descent from zero weights. Features are
// standardized with training-set statistics only; the statistics travel with
// the model. Deterministic in the seed (per-epoch visit order). Requires both
// classes to be present.
LinearModel fit_linear(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels, int epochs, double lr, double reg,
                       std::uint64_t seed = 0, FeatureKind kind = FeatureKind::de);

// Affine score of one standardized feature vector.
double linear_score(const LinearModel& model, const std::vector<double>& features);

// Class per row: 1 when the score is strictly positive, 0 otherwise (a score
// of exactly zero resolves to class 0).
std::vector<int> predict_linear(const LinearModel& model,
                                const std::vector<std::vector<double>>& features);

// Fraction of rows whose prediction matches the label.
double linear_accuracy(const LinearModel& model,
                       const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels);

}  // namespace tsception
