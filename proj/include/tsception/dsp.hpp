#pragma once

// Signal path: Chebyshev Type II band-pass design (analog prototype ->
// band-pass transform -> bilinear transform -> second-order sections),
// zero-phase forward-backward filtering, the 9-band filter bank, relative
// power and differential entropy features, and sliding-window segmentation.

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsception/data.hpp"
#include "tsception/errors.hpp"

namespace tsception {

struct FilterSpec {
    double low_hz = 0.0;   // band corners: the frequencies where the Type II
    double high_hz = 0.0;  // stopband begins; the passband fills the interior
    int fs = 0;
    int order = 4;              // analog prototype order
    double stop_atten_db = 40.0;
    double stop_margin_hz = 2.0;  // transition allowance; also Nyquist clearance

    void validate() const;
};

struct Biquad {
    double b0, b1, b2;  // numerator
    double a1, a2;      // denominator (a0 == 1)
};

struct Sos {
    std::vector<Biquad> sections;
    double gain = 1.0;

    // largest pole magnitude across sections (stability diagnostic)
    double max_pole_radius() const;
};

// Band-pass design: analog Chebyshev II low-pass prototype -> band-pass
// transform (prewarped corners) -> bilinear transform -> paired second-order
// sections. Monotone passband, equiripple stopband at -stop_atten_db outside
// the band corners.
Sos design_cheby2_bandpass(const FilterSpec& spec);

// Zero-phase filtering: odd-reflection padding of 3*(2*sections) samples,
// forward pass, backward pass, padding stripped. Magnitude response is the
// square of the single-pass filter; net phase is zero.
std::vector<double> filtfilt(const Sos& sos, const std::vector<double>& x);

// 0.3-45 Hz zero-phase band-pass on every channel; metadata preserved.
EegRecording preprocess(const EegRecording& raw);

// The nine analysis bands: (4,8),(8,12),...,(36,40) Hz.
std::vector<std::array<double, 2>> filter_bank_edges();

// x filtered through each analysis band (zero-phase).
std::vector<std::vector<double>> filter_bank(const std::vector<double>& x, int fs);

// RP_i = energy_i / sum_j energy_j. Throws ValueError when all bands are zero.
std::vector<double> relative_power(const std::vector<std::vector<double>>& bands);

// 0.5 * ln(2*pi*e*var), unbiased sample variance, natural log.
// Throws ValueError on zero variance or length < 2.
double differential_entropy(const std::vector<double>& x);

// Sliding-window segmentation: floor((len - window)/step) + 1 windows.
SegmentSet segment(const EegRecording& rec, int window, int step);

// Same, with the window given in seconds (converted via the recording's fs).
SegmentSet segment_seconds(const EegRecording& rec, double window_s, int step_samples);

struct FeatureVector {
    std::vector<std::string> channel_names;
    std::vector<std::array<double, 2>> band_edges;
    std::vector<double> rp;            // channels x bands, row-major
    std::vector<double> de;            // channels x bands, row-major
    std::vector<bool> zero_energy;     // per channel: all bands empty, rp/de zeroed

    int channels() const { return static_cast<int>(channel_names.size()); }
    int bands() const { return static_cast<int>(band_edges.size()); }
};

// Per-channel RP and DE over the 9 analysis bands for one segment
// (channels x window samples). Channels with zero energy in every band are
// flagged instead of erroring.
FeatureVector extract_features(const std::vector<std::vector<double>>& channels, int fs,
                               const std::vector<std::string>& channel_names);

// Feature CSV: header "subject,session,stimulus,segment_index" followed by
// all ch{i}_band{j}_rp columns, then all ch{i}_band{j}_de columns.
void write_feature_header(std::ostream& os, int channels, int bands);
void write_feature_row(std::ostream& os, const SegmentProvenance& prov,
                       const FeatureVector& fv);

}  // namespace tsception
