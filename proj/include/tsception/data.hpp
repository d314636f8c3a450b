#pragma once

// Dataset model and on-disk format. A dataset directory holds one file per
// recording at <subject>/<session>/<stimulus>.eegrec plus a manifest.json
// with FNV-1a checksums. Channel order is [left hemisphere..., right
// hemisphere...] and is validated on load.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsception/errors.hpp"
#include "tsception/tensor.hpp"

namespace tsception {

// label values
inline constexpr int kLowArousal = 0;
inline constexpr int kHighArousal = 1;

std::string label_name(int label);          // "low" | "high"
int label_from_name(const std::string& s);  // throws FormatError on other values

struct EegRecording {
    int fs = 0;
    std::vector<std::string> channel_names;  // [left..., right...]
    int label = kLowArousal;
    std::string subject_id;
    std::string session_id;
    std::string stimulus_id;
    std::vector<float> data;  // channels x samples, row-major (microvolts)

    int channels() const { return static_cast<int>(channel_names.size()); }
    long samples() const {
        return channel_names.empty() ? 0 : static_cast<long>(data.size()) / channels();
    }
    const float* channel(int c) const { return data.data() + static_cast<long>(c) * samples(); }

    // checks channel count/data consistency, finiteness, and montage order
    void validate() const;
};

struct SegmentProvenance {
    std::string subject_id;
    std::string session_id;
    std::string stimulus_id;
    int window_index = 0;
};

// N segments of shape (1, channels, window), stored flat with labels and
// per-segment provenance.
struct SegmentSet {
    int channels = 0;
    int window = 0;
    std::vector<float> data;  // N * channels * window
    std::vector<int> labels;
    std::vector<SegmentProvenance> provenance;

    long size() const { return static_cast<long>(labels.size()); }
    long segment_floats() const { return static_cast<long>(channels) * window; }
    const float* segment(long i) const { return data.data() + i * segment_floats(); }

    void append(const SegmentSet& other);
    SegmentSet take(const std::vector<long>& indices) const;

    // batch tensor (B,1,channels,window) for the given segment indices
    Tensor<float> batch(const std::vector<long>& indices) const;
    std::vector<int> batch_labels(const std::vector<long>& indices) const;
};

struct SessionData {
    std::string session_id;
    std::vector<EegRecording> recordings;  // one per stimulus
};

struct SubjectData {
    std::string subject_id;
    std::vector<SessionData> sessions;
};

// --- montage ---------------------------------------------------------------

// Splits channel names at the midpoint into (left, right) and, for 10-20
// names carrying a trailing electrode number, verifies odd numbers sit in the
// left block and even numbers in the right block. Names without a number fall
// back to the positional split (a warning goes to stderr).
std::pair<std::vector<std::string>, std::vector<std::string>> validate_montage(
    const std::vector<std::string>& names);

// --- recording file io -------------------------------------------------------

inline constexpr char kRecordingMagic[9] = "EEGREC01";

void save_recording(const EegRecording& rec, const std::string& path);
EegRecording load_recording(const std::string& path);

// --- manifest ----------------------------------------------------------------

std::uint64_t fnv1a64(const void* bytes, std::size_t len);
std::uint64_t fnv1a64_file(const std::string& path);

// writes manifest.json (relative paths + checksums) into dir
void write_manifest(const std::string& dir, const std::vector<std::string>& relative_paths);

// loads every recording listed in manifest.json (or scans *.eegrec when no
// manifest exists), verifies checksums, groups by subject/session, validates
// montage and per-session label structure
std::vector<SubjectData> load_dataset(const std::string& dir);

// --- synthetic data ----------------------------------------------------------

struct SynthConfig {
    int n_subjects = 18;
    int n_sessions = 3;
    int fs = 256;
    double duration_s = 60.0;
    double snr = 1.0;  // oscillation RMS / pink-noise RMS before asymmetry gains
    std::uint64_t seed = 0;
};

// Generates n_subjects x n_sessions x 2 recordings under out_dir and writes a
// manifest. Low arousal carries symmetric 8-12 Hz activity; high arousal
// carries 18-40 Hz bursts with AF8 > AF7 frontal asymmetry. Deterministic in
// the seed. Returns the relative paths written.
std::vector<std::string> synth_generate(const SynthConfig& cfg, const std::string& out_dir);

// in-memory variant used by tests (no disk round trip)
EegRecording synth_recording(const SynthConfig& cfg, int subject_idx, int session_idx,
                             int label);

// --- LOSO folds ----------------------------------------------------------------

struct LosoFold {
    std::string held_out_session;
    SegmentSet train;
    SegmentSet val;
    SegmentSet test;
};

// One fold per session: test = held-out session's segments; the remaining
// sessions are pooled and split train/val stratified by label with a seeded
// shuffle (or chronologically when chronological = true, taking the earliest
// windows as train).
std::vector<LosoFold> build_loso_folds(const SubjectData& subject, int window, int step,
                                       double val_fraction, std::uint64_t seed,
                                       bool chronological = false);

}  // namespace tsception
