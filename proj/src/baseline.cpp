#include "tsception/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>

#include "tsception/errors.hpp"
#include "tsception/rng.hpp"

namespace tsception {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::string feature_kind_name(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::rp: return "rp";
        case FeatureKind::de: return "de";
        case FeatureKind::both: return "both";
    }
    throw ConfigError("unknown feature kind");
}

FeatureKind feature_kind_from_name(const std::string& name) {
    if (name == "rp") return FeatureKind::rp;
    if (name == "de") return FeatureKind::de;
    if (name == "both") return FeatureKind::both;
    throw ConfigError("unknown feature kind '" + name + "' (expected rp, de, or both)");
}

int FeatureMatrix::width(FeatureKind kind) const {
    switch (kind) {
        case FeatureKind::rp: return rp_width;
        case FeatureKind::de: return de_width;
        case FeatureKind::both: return rp_width + de_width;
    }
    throw ConfigError("unknown feature kind");
}

std::vector<double> FeatureMatrix::row(FeatureKind kind, long i) const {
    if (i < 0 || i >= rows())
        throw DimensionError("feature row " + std::to_string(i) + " out of range for " +
                             std::to_string(rows()) + " rows");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(width(kind)));
    if (kind == FeatureKind::rp || kind == FeatureKind::both)
        out.insert(out.end(), rp.begin() + i * rp_width, rp.begin() + (i + 1) * rp_width);
    if (kind == FeatureKind::de || kind == FeatureKind::both)
        out.insert(out.end(), de.begin() + i * de_width, de.begin() + (i + 1) * de_width);
    return out;
}

std::vector<std::vector<double>> FeatureMatrix::feature_rows(FeatureKind kind) const {
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(rows()));
    for (long i = 0; i < rows(); ++i) out.push_back(row(kind, i));
    return out;
}

FeatureMatrix features_from_segments(const SegmentSet& set, int fs,
                                     const std::vector<std::string>& channel_names) {
    if (static_cast<int>(channel_names.size()) != set.channels)
        throw DimensionError("got " + std::to_string(channel_names.size()) + " channel names for " +
                             std::to_string(set.channels) + "-channel segments");
    FeatureMatrix m;
    for (long i = 0; i < set.size(); ++i) {
        std::vector<std::vector<double>> channels(static_cast<std::size_t>(set.channels));
        const float* seg = set.segment(i);
        for (int c = 0; c < set.channels; ++c)
            channels[static_cast<std::size_t>(c)].assign(seg + static_cast<long>(c) * set.window,
                                                         seg + static_cast<long>(c + 1) * set.window);
        const FeatureVector fv = extract_features(channels, fs, channel_names);
        if (m.rows() == 0) {
            m.rp_width = static_cast<int>(fv.rp.size());
            m.de_width = static_cast<int>(fv.de.size());
        }
        m.rp.insert(m.rp.end(), fv.rp.begin(), fv.rp.end());
        m.de.insert(m.de.end(), fv.de.begin(), fv.de.end());
        m.labels.push_back(set.labels[static_cast<std::size_t>(i)]);
        m.provenance.push_back(set.provenance[static_cast<std::size_t>(i)]);
    }
    return m;
}

FeatureMatrix load_feature_csv(std::istream& is, const std::string& origin) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError(origin + ": empty feature CSV");
    const auto header = split_csv_line(line);
    if (header.size() < 5 || header[0] != "subject" || header[1] != "session" ||
        header[2] != "stimulus" || header[3] != "segment_index")
        throw FormatError(origin + ": feature CSV header must start with "
                                   "subject,session,stimulus,segment_index");
    int rp_width = 0, de_width = 0;
    for (std::size_t i = 4; i < header.size(); ++i) {
        if (ends_with(header[i], "_rp")) {
            if (de_width > 0)
                throw FormatError(origin + ": rp column '" + header[i] + "' after de columns");
            ++rp_width;
        } else if (ends_with(header[i], "_de")) {
            ++de_width;
        } else {
            throw FormatError(origin + ": unrecognized feature column '" + header[i] + "'");
        }
    }
    if (rp_width == 0 || de_width == 0)
        throw FormatError(origin + ": feature CSV needs both rp and de columns");

    FeatureMatrix m;
    m.rp_width = rp_width;
    m.de_width = de_width;
    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw FormatError(origin + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        SegmentProvenance prov;
        prov.subject_id = fields[0];
        prov.session_id = fields[1];
        prov.stimulus_id = fields[2];
        try {
            prov.window_index = std::stoi(fields[3]);
            for (std::size_t i = 4; i < fields.size(); ++i) {
                const double v = std::stod(fields[i]);
                if (i < 4 + static_cast<std::size_t>(rp_width))
                    m.rp.push_back(v);
                else
                    m.de.push_back(v);
            }
        } catch (const std::exception&) {
            throw FormatError(origin + ":" + std::to_string(line_no) + ": unparsable numeric field");
        }
        m.labels.push_back(label_from_name(prov.stimulus_id));
        m.provenance.push_back(std::move(prov));
    }
    return m;
}

FeatureMatrix load_feature_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open feature CSV " + path.string());
    return load_feature_csv(is, path.string());
}

void LinearModel::validate() const {
    if (mean.size() != weights.size() || stddev.size() != weights.size())
        throw DimensionError("linear model has " + std::to_string(weights.size()) +
                             " weights but " + std::to_string(mean.size()) + "/" +
                             std::to_string(stddev.size()) + " normalization statistics");
    if (!std::isfinite(bias)) throw ValueError("linear model bias is not finite");
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (!std::isfinite(weights[i]) || !std::isfinite(mean[i]) || !std::isfinite(stddev[i]) ||
            stddev[i] <= 0.0)
            throw ValueError("linear model statistics degenerate at feature " + std::to_string(i));
}

namespace {

void check_rows(const std::vector<std::vector<double>>& features, std::size_t dim) {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].size() != dim)
            throw DimensionError("feature row " + std::to_string(i) + " has " +
                                 std::to_string(features[i].size()) + " values, expected " +
                                 std::to_string(dim));
}

}  // namespace

LinearModel fit_linear(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels, int epochs, double lr, double reg,
                       std::uint64_t seed, FeatureKind kind) {
    if (features.empty()) throw DataError("fit_linear got an empty feature set");
    if (features.size() != labels.size())
        throw DimensionError("fit_linear got " + std::to_string(features.size()) +
                             " feature rows but " + std::to_string(labels.size()) + " labels");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (reg < 0.0) throw ConfigError("regularization must be >= 0");
    const std::size_t dim = features[0].size();
    if (dim == 0) throw DataError("fit_linear got zero-dimensional features");
    check_rows(features, dim);

    long n_low = 0, n_high = 0;
    for (const int label : labels) {
        if (label != 0 && label != 1)
            throw ValueError("fit_linear labels must be 0 or 1, got " + std::to_string(label));
        (label == 0 ? n_low : n_high)++;
    }
    if (n_low == 0 || n_high == 0)
        throw DataError("fit_linear needs both classes; got a single-class input");

    LinearModel model;
    model.feature_kind = kind;
    model.mean.assign(dim, 0.0);
    model.stddev.assign(dim, 0.0);
    const double n = static_cast<double>(features.size());
    for (const auto& x : features)
        for (std::size_t f = 0; f < dim; ++f) model.mean[f] += x[f] / n;
    for (const auto& x : features)
        for (std::size_t f = 0; f < dim; ++f) {
            const double d = x[f] - model.mean[f];
            model.stddev[f] += d * d / n;
        }
    for (std::size_t f = 0; f < dim; ++f) {
        if (!std::isfinite(model.mean[f]) || !std::isfinite(model.stddev[f]))
            throw ValueError("non-finite training feature at column " + std::to_string(f));
        // constant features standardize to zero instead of dividing by zero
        model.stddev[f] = model.stddev[f] > 0.0 ? std::sqrt(model.stddev[f]) : 1.0;
    }

    // standardize once up front
    std::vector<std::vector<double>> z = features;
    for (auto& x : z)
        for (std::size_t f = 0; f < dim; ++f) x[f] = (x[f] - model.mean[f]) / model.stddev[f];

    model.weights.assign(dim, 0.0);
    model.bias = 0.0;
    Rng order_rng(mix_seed(seed, 0x68696E6765ULL));
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        order_rng.shuffle(order);
        for (const std::size_t i : order) {
            const double y = labels[i] == 1 ? 1.0 : -1.0;
            double score = model.bias;
            for (std::size_t f = 0; f < dim; ++f) score += model.weights[f] * z[i][f];
            const double decay = 1.0 - lr * reg;
            for (std::size_t f = 0; f < dim; ++f) model.weights[f] *= decay;
            if (y * score < 1.0) {  // hinge subgradient: only margin violations push
                for (std::size_t f = 0; f < dim; ++f) model.weights[f] += lr * y * z[i][f];
                model.bias += lr * y;
            }
        }
    }
    model.validate();
    return model;
}

double linear_score(const LinearModel& model, const std::vector<double>& features) {
    if (features.size() != model.weights.size())
        throw DimensionError("feature vector has " + std::to_string(features.size()) +
                             " values but the model expects " +
                             std::to_string(model.weights.size()));
    double score = model.bias;
    for (std::size_t f = 0; f < features.size(); ++f)
        score += model.weights[f] * (features[f] - model.mean[f]) / model.stddev[f];
    return score;
}

std::vector<int> predict_linear(const LinearModel& model,
                                const std::vector<std::vector<double>>& features) {
    std::vector<int> out;
    out.reserve(features.size());
    for (const auto& x : features) out.push_back(linear_score(model, x) > 0.0 ? 1 : 0);
    return out;
}

double linear_accuracy(const LinearModel& model,
                       const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels) {
    if (features.size() != labels.size() || features.empty())
        throw DataError("accuracy needs matching, non-empty features and labels");
    const auto preds = predict_linear(model, features);
    long correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace tsception
