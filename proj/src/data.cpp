#include "tsception/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "nlohmann/json.hpp"
#include "tsception/dsp.hpp"
#include "tsception/rng.hpp"

namespace tsception {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
constexpr double kPi = 3.14159265358979323846;

std::string join_names(const std::vector<std::string>& names) {
    std::string out = "[";
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out += ", ";
        out += names[i];
    }
    return out + "]";
}

// trailing electrode number of a 10-20 style name; -1 when there is none
int trailing_number(const std::string& name) {
    std::size_t pos = name.size();
    while (pos > 0 && std::isdigit(static_cast<unsigned char>(name[pos - 1]))) --pos;
    if (pos == name.size()) return -1;
    return std::stoi(name.substr(pos));
}

void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32le(std::string& out, float v) {
    put_u32le(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double rms(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

void check_synth_config(const SynthConfig& cfg) {
    if (cfg.n_subjects < 1 || cfg.n_sessions < 1)
        throw ConfigError("synthesis needs at least 1 subject and 1 session");
    if (cfg.fs < 80) throw ConfigError("synthesis requires fs >= 80 Hz");
    if (!(cfg.duration_s > 0.0)) throw ConfigError("synthesis duration must be > 0 s");
    if (!(cfg.snr >= 0.0)) throw ConfigError("synthesis SNR must be >= 0");
}

}  // namespace

std::string label_name(int label) {
    if (label == kLowArousal) return "low";
    if (label == kHighArousal) return "high";
    throw ValueError("label must be 0 (low) or 1 (high), got " + std::to_string(label));
}

int label_from_name(const std::string& s) {
    if (s == "low") return kLowArousal;
    if (s == "high") return kHighArousal;
    throw FormatError("unknown label \"" + s + "\"; expected \"low\" or \"high\"");
}

void EegRecording::validate() const {
    if (channel_names.empty()) throw DataError("recording has no channels");
    if (fs < 1) throw DataError("recording has invalid sampling rate " + std::to_string(fs));
    if (label != kLowArousal && label != kHighArousal)
        throw DataError("recording label " + std::to_string(label) + " is not 0/1");
    if (data.size() % channel_names.size() != 0)
        throw DataError("data size " + std::to_string(data.size()) +
                        " is not a multiple of channel count " +
                        std::to_string(channel_names.size()));
    if (data.empty()) throw DataError("recording has no samples");
    const long n = samples();
    for (int c = 0; c < channels(); ++c) {
        const float* p = channel(c);
        for (long i = 0; i < n; ++i) {
            if (!std::isfinite(p[i]))
                throw DataError("non-finite sample in channel " + channel_names[c] +
                                " at index " + std::to_string(i));
        }
    }
    validate_montage(channel_names);
}

std::pair<std::vector<std::string>, std::vector<std::string>> validate_montage(
    const std::vector<std::string>& names) {
    if (names.size() < 2 || names.size() % 2 != 0)
        throw DataError("montage needs an even channel count >= 2, got " +
                        std::to_string(names.size()) + " in " + join_names(names));
    const std::size_t mid = names.size() / 2;
    std::vector<std::string> offenders, unnumbered;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const int num = trailing_number(names[i]);
        if (num < 0) {
            unnumbered.push_back(names[i]);
            continue;
        }
        const bool in_left = i < mid;
        const bool wants_left = num % 2 == 1;
        if (in_left != wants_left)
            offenders.push_back(names[i] + (wants_left ? " (odd-numbered, belongs left)"
                                                       : " (even-numbered, belongs right)"));
    }
    if (!offenders.empty())
        throw DataError("montage violates left/right ordering: " + join_names(offenders) +
                        " in " + join_names(names));
    if (!unnumbered.empty())
        std::cerr << "warning: channels without a 10-20 number use positional hemisphere "
                     "assignment: "
                  << join_names(unnumbered) << "\n";
    return {std::vector<std::string>(names.begin(), names.begin() + static_cast<long>(mid)),
            std::vector<std::string>(names.begin() + static_cast<long>(mid), names.end())};
}

void SegmentSet::append(const SegmentSet& other) {
    if (labels.empty() && channels == 0) {
        channels = other.channels;
        window = other.window;
    } else if (channels != other.channels || window != other.window) {
        throw DimensionError("cannot append segments of shape (" +
                             std::to_string(other.channels) + "," + std::to_string(other.window) +
                             ") to set of shape (" + std::to_string(channels) + "," +
                             std::to_string(window) + ")");
    }
    data.insert(data.end(), other.data.begin(), other.data.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
}

SegmentSet SegmentSet::take(const std::vector<long>& indices) const {
    SegmentSet out;
    out.channels = channels;
    out.window = window;
    out.data.reserve(indices.size() * static_cast<std::size_t>(segment_floats()));
    for (long i : indices) {
        if (i < 0 || i >= size())
            throw DimensionError("segment index " + std::to_string(i) + " out of range [0," +
                                 std::to_string(size()) + ")");
        const float* src = segment(i);
        out.data.insert(out.data.end(), src, src + segment_floats());
        out.labels.push_back(labels[static_cast<std::size_t>(i)]);
        out.provenance.push_back(provenance[static_cast<std::size_t>(i)]);
    }
    return out;
}

Tensor<float> SegmentSet::batch(const std::vector<long>& indices) const {
    if (indices.empty()) throw DimensionError("cannot build an empty batch");
    Tensor<float> out({static_cast<int>(indices.size()), 1, channels, window});
    float* dst = out.vec().data();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const long i = indices[b];
        if (i < 0 || i >= size())
            throw DimensionError("segment index " + std::to_string(i) + " out of range [0," +
                                 std::to_string(size()) + ")");
        std::copy_n(segment(i), segment_floats(), dst + b * segment_floats());
    }
    return out;
}

std::vector<int> SegmentSet::batch_labels(const std::vector<long>& indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (long i : indices) {
        if (i < 0 || i >= size())
            throw DimensionError("segment index " + std::to_string(i) + " out of range [0," +
                                 std::to_string(size()) + ")");
        out.push_back(labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

// --- recording file io -------------------------------------------------------

void save_recording(const EegRecording& rec, const std::string& path) {
    rec.validate();
    json header{{"fs", rec.fs},
                {"channel_names", rec.channel_names},
                {"label", label_name(rec.label)},
                {"subject_id", rec.subject_id},
                {"session_id", rec.session_id},
                {"stimulus_id", rec.stimulus_id},
                {"n_samples", rec.samples()}};
    const std::string header_text = header.dump();

    std::string blob;
    blob.reserve(8 + 4 + header_text.size() + 4 * rec.data.size());
    blob.append(kRecordingMagic, 8);
    put_u32le(blob, static_cast<std::uint32_t>(header_text.size()));
    blob += header_text;
    for (float v : rec.data) put_f32le(blob, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(blob.data(), static_cast<long>(blob.size()));
    if (!out) throw DataError("short write to " + path);
}

EegRecording load_recording(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 12)
        throw FormatError(path + ": file too small (" + std::to_string(bytes.size()) +
                          " bytes) to hold magic and header length");
    if (std::memcmp(bytes.data(), kRecordingMagic, 8) != 0)
        throw FormatError(path + ": bad magic \"" + bytes.substr(0, 8) + "\", expected \"" +
                          kRecordingMagic + "\"");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t header_len = get_u32le(p + 8);
    if (bytes.size() < 12 + static_cast<std::size_t>(header_len))
        throw FormatError(path + ": truncated header: expected " + std::to_string(header_len) +
                          " bytes, got " + std::to_string(bytes.size() - 12));

    json header;
    try {
        header = json::parse(bytes.substr(12, header_len));
    } catch (const json::exception& e) {
        throw FormatError(path + ": invalid JSON header: " + e.what());
    }

    EegRecording rec;
    try {
        rec.fs = header.at("fs").get<int>();
        rec.channel_names = header.at("channel_names").get<std::vector<std::string>>();
        rec.label = label_from_name(header.at("label").get<std::string>());
        rec.subject_id = header.at("subject_id").get<std::string>();
        rec.session_id = header.at("session_id").get<std::string>();
        rec.stimulus_id = header.at("stimulus_id").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(path + ": bad header field: " + e.what());
    }
    const long n_samples = header.at("n_samples").get<long>();
    if (n_samples < 0 || rec.channel_names.empty())
        throw FormatError(path + ": invalid n_samples/channel_names in header");

    const std::size_t payload_offset = 12 + header_len;
    const std::size_t expected = static_cast<std::size_t>(n_samples) *
                                 rec.channel_names.size() * 4;
    const std::size_t actual = bytes.size() - payload_offset;
    if (actual != expected)
        throw FormatError(path + ": payload size mismatch: expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(actual));

    rec.data.resize(static_cast<std::size_t>(n_samples) * rec.channel_names.size());
    const auto* q = reinterpret_cast<const unsigned char*>(bytes.data()) + payload_offset;
    for (std::size_t i = 0; i < rec.data.size(); ++i)
        rec.data[i] = std::bit_cast<float>(get_u32le(q + 4 * i));
    rec.validate();
    return rec;
}

// --- manifest ----------------------------------------------------------------

std::uint64_t fnv1a64(const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path + " for checksumming");
    std::uint64_t h = 14695981039346656037ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const long got = in.gcount();
        for (long i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (got < static_cast<long>(sizeof buf)) break;
    }
    return h;
}

namespace {
std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}
}  // namespace

void write_manifest(const std::string& dir, const std::vector<std::string>& relative_paths) {
    std::vector<std::string> sorted = relative_paths;
    std::sort(sorted.begin(), sorted.end());
    json files = json::array();
    for (const std::string& rel : sorted)
        files.push_back({{"path", rel}, {"fnv1a64", hex64(fnv1a64_file(dir + "/" + rel))}});
    json manifest{{"format_version", 1}, {"files", files}};
    std::ofstream out(dir + "/manifest.json", std::ios::trunc);
    if (!out) throw DataError("cannot write " + dir + "/manifest.json");
    out << manifest.dump(2) << "\n";
}

std::vector<SubjectData> load_dataset(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError(dir + " is not a directory");

    std::vector<std::string> rel_paths;
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        json manifest;
        try {
            in >> manifest;
        } catch (const json::exception& e) {
            throw FormatError(manifest_path.string() + ": invalid JSON: " + e.what());
        }
        if (manifest.value("format_version", 0) != 1)
            throw FormatError(manifest_path.string() + ": unsupported format_version");
        for (const auto& entry : manifest.at("files")) {
            const std::string rel = entry.at("path").get<std::string>();
            const std::string want = entry.at("fnv1a64").get<std::string>();
            const std::string got = hex64(fnv1a64_file(dir + "/" + rel));
            if (got != want)
                throw DataError(rel + ": checksum mismatch: manifest says " + want + ", file is " +
                                got);
            rel_paths.push_back(rel);
        }
    } else {
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".eegrec")
                rel_paths.push_back(fs::relative(e.path(), dir).string());
        std::sort(rel_paths.begin(), rel_paths.end());
    }
    if (rel_paths.empty()) throw DataError("no recordings found under " + dir);

    std::vector<std::string> canonical_order;
    std::map<std::string, std::map<std::string, std::vector<EegRecording>>> by_subject;
    for (const std::string& rel : rel_paths) {
        EegRecording rec = load_recording(dir + "/" + rel);
        if (canonical_order.empty()) {
            canonical_order = rec.channel_names;
        } else if (rec.channel_names != canonical_order) {
            throw DataError(rel + ": channel order " + join_names(rec.channel_names) +
                            " differs from the dataset's order " + join_names(canonical_order) +
                            "; reorder the channels to match");
        }
        by_subject[rec.subject_id][rec.session_id].push_back(std::move(rec));
    }

    std::vector<SubjectData> subjects;
    for (auto& [subject_id, sessions] : by_subject) {
        SubjectData subject;
        subject.subject_id = subject_id;
        int subject_fs = 0;
        for (auto& [session_id, recs] : sessions) {
            int low = 0, high = 0;
            for (const EegRecording& r : recs) {
                if (subject_fs == 0) subject_fs = r.fs;
                if (r.fs != subject_fs)
                    throw DataError("subject " + subject_id + " mixes sampling rates " +
                                    std::to_string(subject_fs) + " and " + std::to_string(r.fs));
                (r.label == kLowArousal ? low : high)++;
            }
            if (low != 1 || high != 1)
                throw DataError("subject " + subject_id + " session " + session_id + " has " +
                                std::to_string(low) + " low / " + std::to_string(high) +
                                " high recordings; expected exactly one of each");
            std::sort(recs.begin(), recs.end(),
                      [](const EegRecording& a, const EegRecording& b) {
                          return a.stimulus_id < b.stimulus_id;
                      });
            subject.sessions.push_back({session_id, std::move(recs)});
        }
        subjects.push_back(std::move(subject));
    }
    return subjects;
}

// --- synthetic data ----------------------------------------------------------

EegRecording synth_recording(const SynthConfig& cfg, int subject_idx, int session_idx,
                             int label) {
    check_synth_config(cfg);
    if (subject_idx < 0 || subject_idx >= cfg.n_subjects)
        throw ConfigError("subject index " + std::to_string(subject_idx) + " out of range");
    if (session_idx < 0 || session_idx >= cfg.n_sessions)
        throw ConfigError("session index " + std::to_string(session_idx) + " out of range");
    label_name(label);  // range check

    const long n = std::llround(cfg.duration_s * cfg.fs);
    const std::vector<std::string> names = {"TP9", "AF7", "AF8", "TP10"};
    const int C = static_cast<int>(names.size());

    // per-subject background level, independent of session/label
    Rng subject_rng(mix_seed(mix_seed(cfg.seed, 0xBAC6ULL), static_cast<std::uint64_t>(subject_idx)));
    const double subject_gain = subject_rng.uniform(0.8, 1.2);
    const double noise_rms = 10.0 * subject_gain;  // microvolts

    Rng rng(mix_seed(
        mix_seed(mix_seed(mix_seed(cfg.seed, 0x5EC5ULL), static_cast<std::uint64_t>(subject_idx)),
                 static_cast<std::uint64_t>(session_idx)),
        static_cast<std::uint64_t>(label)));

    // pink-noise background per channel (Paul Kellet's economy filter)
    std::vector<std::vector<double>> noise(static_cast<std::size_t>(C),
                                           std::vector<double>(static_cast<std::size_t>(n)));
    for (int c = 0; c < C; ++c) {
        double b0 = 0.0, b1 = 0.0, b2 = 0.0;
        for (long i = 0; i < n; ++i) {
            const double w = rng.normal();
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            noise[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] =
                b0 + b1 + b2 + w * 0.1848;
        }
        const double r = rms(noise[static_cast<std::size_t>(c)]);
        const double scale = r > 0.0 ? noise_rms / r : 0.0;
        for (double& v : noise[static_cast<std::size_t>(c)]) v *= scale;
    }

    // one shared burst train: Hann-windowed oscillation packets with random
    // gaps; the class determines the frequency band
    const double lo = label == kHighArousal ? 18.0 : 8.0;
    const double hi = label == kHighArousal ? 40.0 : 12.0;
    std::vector<double> osc(static_cast<std::size_t>(n), 0.0);
    double t = 0.0;
    while (true) {
        const double gap = rng.uniform(0.2, 1.0);
        const double dur = rng.uniform(0.5, 1.5);
        const double freq = rng.uniform(lo, hi);
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        const double start = t + gap;
        if (start >= cfg.duration_s) break;
        const long i0 = std::llround(start * cfg.fs);
        const long burst_len = std::llround(dur * cfg.fs);
        const long i1 = std::min(n, i0 + burst_len);
        for (long i = i0; i < i1; ++i) {
            const double u = static_cast<double>(i - i0) / static_cast<double>(burst_len);
            const double env = 0.5 * (1.0 - std::cos(2.0 * kPi * u));
            osc[static_cast<std::size_t>(i)] +=
                env * std::sin(2.0 * kPi * freq * static_cast<double>(i - i0) / cfg.fs + phase);
        }
        t = start + dur;
    }
    // SNR is defined on the shared train before per-channel asymmetry gains
    const double osc_rms = rms(osc);
    if (osc_rms > 0.0)
        for (double& v : osc) v *= cfg.snr * noise_rms / osc_rms;

    // frontal asymmetry (AF8 > AF7) for high arousal; symmetric alpha for low
    const std::array<double, 4> amps = label == kHighArousal
                                           ? std::array<double, 4>{0.8, 0.5, 1.5, 0.8}
                                           : std::array<double, 4>{1.0, 1.0, 1.0, 1.0};

    EegRecording rec;
    rec.fs = cfg.fs;
    rec.channel_names = names;
    rec.label = label;
    {
        std::ostringstream sid;
        sid << "sub" << (subject_idx + 1 < 10 ? "0" : "") << subject_idx + 1;
        rec.subject_id = sid.str();
        std::ostringstream ses;
        ses << "ses" << (session_idx + 1 < 10 ? "0" : "") << session_idx + 1;
        rec.session_id = ses.str();
    }
    rec.stimulus_id = label_name(label);
    rec.data.resize(static_cast<std::size_t>(C) * static_cast<std::size_t>(n));
    for (int c = 0; c < C; ++c)
        for (long i = 0; i < n; ++i)
            rec.data[static_cast<std::size_t>(c) * n + i] = static_cast<float>(
                noise[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] +
                amps[static_cast<std::size_t>(c)] * osc[static_cast<std::size_t>(i)]);
    return rec;
}

std::vector<std::string> synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
    check_synth_config(cfg);
    std::vector<std::string> rel_paths;
    for (int s = 0; s < cfg.n_subjects; ++s) {
        for (int e = 0; e < cfg.n_sessions; ++e) {
            for (int label : {kLowArousal, kHighArousal}) {
                const EegRecording rec = synth_recording(cfg, s, e, label);
                const fs::path rel =
                    fs::path(rec.subject_id) / rec.session_id / (rec.stimulus_id + ".eegrec");
                fs::create_directories(fs::path(out_dir) / rel.parent_path());
                save_recording(rec, (fs::path(out_dir) / rel).string());
                rel_paths.push_back(rel.generic_string());
            }
        }
    }
    write_manifest(out_dir, rel_paths);
    return rel_paths;
}

// --- LOSO folds ----------------------------------------------------------------

std::vector<LosoFold> build_loso_folds(const SubjectData& subject, int window, int step,
                                       double val_fraction, std::uint64_t seed,
                                       bool chronological) {
    if (subject.sessions.size() < 2)
        throw DataError("leave-one-session-out needs >= 2 sessions, subject " +
                        subject.subject_id + " has " + std::to_string(subject.sessions.size()));
    if (!(0.0 < val_fraction && val_fraction < 1.0))
        throw ConfigError("validation fraction must lie in (0,1), got " +
                          std::to_string(val_fraction));

    std::vector<LosoFold> folds;
    for (std::size_t held = 0; held < subject.sessions.size(); ++held) {
        LosoFold fold;
        fold.held_out_session = subject.sessions[held].session_id;

        SegmentSet pool;
        for (std::size_t s = 0; s < subject.sessions.size(); ++s) {
            for (const EegRecording& rec : subject.sessions[s].recordings) {
                SegmentSet segs = segment(rec, window, step);
                if (s == held)
                    fold.test.append(segs);
                else
                    pool.append(segs);
            }
        }

        // stratified split: per label, the first floor((1-f)*n) segments (of a
        // seeded shuffle, or chronological order) go to train, the rest to val
        std::vector<long> by_label[2];
        for (long i = 0; i < pool.size(); ++i)
            by_label[pool.labels[static_cast<std::size_t>(i)]].push_back(i);

        // The seed is reused as-is for every fold so that folds with identical
        // session data produce identical splits (and identical accuracies).
        Rng rng(mix_seed(seed, 0x464F4C44ULL));
        std::vector<long> train_idx, val_idx;
        for (auto& idx : by_label) {
            if (!chronological) rng.shuffle(idx);
            const long n_train =
                static_cast<long>(std::floor((1.0 - val_fraction) * static_cast<double>(idx.size())));
            train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
            val_idx.insert(val_idx.end(), idx.begin() + n_train, idx.end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
        fold.train = pool.take(train_idx);
        fold.val = pool.take(val_idx);
        folds.push_back(std::move(fold));
    }
    return folds;
}

}  // namespace tsception
