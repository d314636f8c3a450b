#include "tsception/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <limits>
#include <ostream>

namespace tsception {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

struct Zpk {
    std::vector<cplx> z, p;
    double k = 1.0;
};

// Analog Chebyshev Type II low-pass prototype with stopband edge at omega=1:
// monotone passband, equiripple stopband at -rs dB.
Zpk cheb2ap(int n, double rs) {
    const double de = 1.0 / std::sqrt(std::pow(10.0, 0.1 * rs) - 1.0);
    const double mu = std::asinh(1.0 / de) / n;
    Zpk out;
    for (int m = -n + 1; m < n; m += 2) {
        if (m == 0) continue;  // odd order: one zero lives at infinity
        out.z.push_back(-std::conj(cplx(0.0, 1.0) / std::sin(m * kPi / (2.0 * n))));
    }
    for (int m = -n + 1; m < n; m += 2) {
        cplx p = -std::exp(cplx(0.0, kPi * m / (2.0 * n)));
        p = cplx(std::sinh(mu) * p.real(), std::cosh(mu) * p.imag());
        out.p.push_back(1.0 / p);
    }
    cplx num = 1.0, den = 1.0;
    for (const cplx& p : out.p) num *= -p;
    for (const cplx& z : out.z) den *= -z;
    out.k = (num / den).real();
    return out;
}

// Low-pass (stop edge 1 rad/s) -> band-pass centered at wo with bandwidth bw.
Zpk lp2bp(const Zpk& lp, double wo, double bw) {
    const int degree = static_cast<int>(lp.p.size() - lp.z.size());
    Zpk out;
    auto transform = [&](const std::vector<cplx>& roots, std::vector<cplx>& dst) {
        for (const cplx& s : roots) {
            const cplx scaled = s * (bw / 2.0);
            const cplx disc = std::sqrt(scaled * scaled - wo * wo);
            dst.push_back(scaled + disc);
            dst.push_back(scaled - disc);
        }
    };
    transform(lp.z, out.z);
    transform(lp.p, out.p);
    for (int i = 0; i < degree; ++i) out.z.push_back(0.0);
    out.k = lp.k * std::pow(bw, degree);
    return out;
}

// Bilinear transform s -> z with sample rate fs (prewarping happens in the
// edge-frequency computation, not here).
Zpk bilinear(const Zpk& analog, double fs) {
    const double fs2 = 2.0 * fs;
    const int degree = static_cast<int>(analog.p.size() - analog.z.size());
    Zpk out;
    cplx num = 1.0, den = 1.0;
    for (const cplx& z : analog.z) {
        out.z.push_back((fs2 + z) / (fs2 - z));
        num *= fs2 - z;
    }
    for (const cplx& p : analog.p) {
        out.p.push_back((fs2 + p) / (fs2 - p));
        den *= fs2 - p;
    }
    for (int i = 0; i < degree; ++i) out.z.push_back(-1.0);
    out.k = analog.k * (num / den).real();
    return out;
}

// Conjugate-pair grouping: returns (a, b) root pairs whose quadratic has real
// coefficients. Complex roots pair with their conjugates; real roots pair
// among themselves by value.
std::vector<std::pair<cplx, cplx>> pair_roots(std::vector<cplx> roots,
                                              const char* what) {
    constexpr double tol = 1e-9;
    std::vector<cplx> complex_reps;
    std::vector<double> reals;
    for (const cplx& r : roots) {
        if (std::abs(r.imag()) > tol * std::max(1.0, std::abs(r))) {
            if (r.imag() > 0) complex_reps.push_back(r);
        } else {
            reals.push_back(r.real());
        }
    }
    if (reals.size() % 2 != 0)
        throw DesignError(std::string("cannot pair an odd number of real ") + what);
    std::sort(reals.begin(), reals.end());
    std::vector<std::pair<cplx, cplx>> pairs;
    for (const cplx& r : complex_reps) pairs.emplace_back(r, std::conj(r));
    for (std::size_t i = 0; i < reals.size(); i += 2)
        pairs.emplace_back(reals[i], reals[i + 1]);
    return pairs;
}

// zeros/poles -> cascaded biquads. Pole pairs are processed from farthest to
// closest to the unit circle, each taking the nearest remaining zero pair, so
// the most resonant section sits last in the cascade.
std::vector<Biquad> zpk2sos(const Zpk& zpk) {
    if (zpk.z.size() != zpk.p.size())
        throw DesignError("zpk2sos expects equal zero/pole counts");
    auto zpairs = pair_roots(zpk.z, "zeros");
    auto ppairs = pair_roots(zpk.p, "poles");
    if (zpairs.size() != ppairs.size())
        throw DesignError("zero/pole pairing produced unequal section counts");

    std::sort(ppairs.begin(), ppairs.end(), [](const auto& a, const auto& b) {
        return std::abs(a.first) < std::abs(b.first);
    });

    std::vector<Biquad> sections;
    for (const auto& pp : ppairs) {
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < zpairs.size(); ++i) {
            const double d = std::abs(zpairs[i].first - pp.first);
            if (d < best_dist) {
                best_dist = d;
                best = i;
            }
        }
        const auto zp = zpairs[best];
        zpairs.erase(zpairs.begin() + static_cast<long>(best));

        Biquad s{};
        s.b0 = 1.0;
        s.b1 = -(zp.first + zp.second).real();
        s.b2 = (zp.first * zp.second).real();
        s.a1 = -(pp.first + pp.second).real();
        s.a2 = (pp.first * pp.second).real();
        sections.push_back(s);
    }
    return sections;
}

double section_pole_radius(const Biquad& s) {
    const double disc = s.a1 * s.a1 - 4.0 * s.a2;
    if (disc >= 0.0) {
        const double r1 = (-s.a1 + std::sqrt(disc)) / 2.0;
        const double r2 = (-s.a1 - std::sqrt(disc)) / 2.0;
        return std::max(std::abs(r1), std::abs(r2));
    }
    return std::sqrt(s.a2);  // conjugate pair: |p|^2 == a2
}

// One forward pass of the cascade (direct form II transposed) with explicit
// initial state per section; filters in place.
void sosfilt(const std::vector<Biquad>& sections, std::vector<double>& x,
             std::vector<std::array<double, 2>> state) {
    for (std::size_t j = 0; j < sections.size(); ++j) {
        const Biquad& s = sections[j];
        double s0 = state[j][0], s1 = state[j][1];
        for (double& v : x) {
            const double y = s.b0 * v + s0;
            s0 = s.b1 * v - s.a1 * y + s1;
            s1 = s.b2 * v - s.a2 * y;
            v = y;
        }
    }
}

// Steady-state section states for a unit-level DC input, cascading each
// section's DC gain into the next section's input level.
std::vector<std::array<double, 2>> sosfilt_zi(const std::vector<Biquad>& sections) {
    std::vector<std::array<double, 2>> zi;
    double level = 1.0;
    for (const Biquad& s : sections) {
        const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        zi.push_back({level * (g - s.b0), level * (s.b2 - s.a2 * g)});
        level *= g;
    }
    return zi;
}

}  // namespace

void FilterSpec::validate() const {
    if (fs < 1) throw DesignError("filter design requires fs >= 1");
    const double nyquist = fs / 2.0;
    if (!(0.0 < low_hz && low_hz < high_hz && high_hz < nyquist))
        throw DesignError("band edges must satisfy 0 < low < high < fs/2, got (" +
                          std::to_string(low_hz) + "," + std::to_string(high_hz) + ") at fs " +
                          std::to_string(fs));
    if (order < 2) throw DesignError("prototype order must be >= 2");
    if (stop_atten_db <= 0.0) throw DesignError("stopband attenuation must be > 0 dB");
    if (stop_margin_hz <= 0.0) throw DesignError("stop margin must be > 0 Hz");
    if (high_hz + stop_margin_hz >= nyquist)
        throw DesignError("upper stop edge " + std::to_string(high_hz + stop_margin_hz) +
                          " Hz reaches Nyquist " + std::to_string(nyquist) + " Hz");
}

double Sos::max_pole_radius() const {
    double r = 0.0;
    for (const Biquad& s : sections) r = std::max(r, section_pole_radius(s));
    return r;
}

Sos design_cheby2_bandpass(const FilterSpec& spec) {
    spec.validate();
    // The band corners are where the Type II stopband begins (the -stop_atten
    // points); the monotone passband fills the interior, reaching the corners
    // to within roughly stop_margin_hz.
    const double stop_lo = spec.low_hz;
    const double stop_hi = spec.high_hz;

    // prewarped analog edge frequencies for the bilinear transform
    const double fs = spec.fs;
    const double w1 = 2.0 * fs * std::tan(kPi * stop_lo / fs);
    const double w2 = 2.0 * fs * std::tan(kPi * stop_hi / fs);
    const double wo = std::sqrt(w1 * w2);
    const double bw = w2 - w1;

    const Zpk digital =
        bilinear(lp2bp(cheb2ap(spec.order, spec.stop_atten_db), wo, bw), fs);

    Sos sos;
    sos.sections = zpk2sos(digital);
    sos.gain = digital.k;
    const double radius = sos.max_pole_radius();
    if (radius >= 1.0 - 1e-9)
        throw DesignError("unstable design: pole radius " + std::to_string(radius) +
                          " for band (" + std::to_string(spec.low_hz) + "," +
                          std::to_string(spec.high_hz) + ") Hz");
    return sos;
}

std::vector<double> filtfilt(const Sos& sos, const std::vector<double>& x) {
    const long nsec = static_cast<long>(sos.sections.size());
    const long padlen = 3 * (2 * nsec);
    if (static_cast<long>(x.size()) <= padlen)
        throw ValueError("filtfilt input length " + std::to_string(x.size()) +
                         " too short; needs more than " + std::to_string(padlen) + " samples");

    // odd reflection about the first and last samples
    const long n = static_cast<long>(x.size());
    std::vector<double> ext(static_cast<std::size_t>(n + 2 * padlen));
    for (long i = 0; i < padlen; ++i) ext[i] = 2.0 * x[0] - x[padlen - i];
    for (long i = 0; i < n; ++i) ext[padlen + i] = x[i];
    for (long i = 0; i < padlen; ++i) ext[padlen + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

    const auto zi = sosfilt_zi(sos.sections);
    auto one_pass = [&](std::vector<double>& sig) {
        for (double& v : sig) v *= sos.gain;  // overall gain enters once per pass
        auto state = zi;
        for (auto& st : state) {
            st[0] *= sig.front();
            st[1] *= sig.front();
        }
        sosfilt(sos.sections, sig, std::move(state));
    };

    one_pass(ext);
    std::reverse(ext.begin(), ext.end());
    one_pass(ext);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + padlen, ext.begin() + padlen + n);
}

EegRecording preprocess(const EegRecording& raw) {
    raw.validate();
    FilterSpec spec;
    spec.low_hz = 0.3;
    spec.high_hz = 45.0;
    spec.fs = raw.fs;
    const Sos sos = design_cheby2_bandpass(spec);

    EegRecording out = raw;
    const long n = raw.samples();
    std::vector<double> channel(static_cast<std::size_t>(n));
    for (int c = 0; c < raw.channels(); ++c) {
        const float* src = raw.channel(c);
        for (long i = 0; i < n; ++i) channel[i] = src[i];
        const std::vector<double> filtered = filtfilt(sos, channel);
        float* dst = out.data.data() + static_cast<long>(c) * n;
        for (long i = 0; i < n; ++i) dst[i] = static_cast<float>(filtered[i]);
    }
    return out;
}

std::vector<std::array<double, 2>> filter_bank_edges() {
    std::vector<std::array<double, 2>> edges;
    for (int k = 1; k <= 9; ++k) edges.push_back({4.0 * k, 4.0 * k + 4.0});
    return edges;
}

std::vector<std::vector<double>> filter_bank(const std::vector<double>& x, int fs) {
    if (fs < 80)
        throw DesignError("filter bank requires fs >= 80 Hz (top band reaches 40 Hz), got " +
                          std::to_string(fs));
    std::vector<std::vector<double>> out;
    for (const auto& edge : filter_bank_edges()) {
        FilterSpec spec;
        spec.low_hz = edge[0];
        spec.high_hz = edge[1];
        spec.fs = fs;
        out.push_back(filtfilt(design_cheby2_bandpass(spec), x));
    }
    return out;
}

std::vector<double> relative_power(const std::vector<std::vector<double>>& bands) {
    if (bands.empty()) throw ValueError("relative_power of zero bands");
    std::vector<double> energy;
    double total = 0.0;
    for (const auto& b : bands) {
        double e = 0.0;
        for (double v : b) e += v * v;
        energy.push_back(e);
        total += e;
    }
    if (total <= 0.0)
        throw ValueError("relative power undefined: zero energy in every band");
    for (double& e : energy) e /= total;
    return energy;
}

double differential_entropy(const std::vector<double>& x) {
    const long n = static_cast<long>(x.size());
    if (n < 2) throw ValueError("differential entropy needs >= 2 samples");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    if (var <= 0.0)
        throw ValueError("differential entropy undefined for zero-variance signal");
    return 0.5 * std::log(2.0 * kPi * std::exp(1.0) * var);
}

SegmentSet segment(const EegRecording& rec, int window, int step) {
    if (window < 1 || step < 1) throw ValueError("segment window and step must be >= 1");
    const long len = rec.samples();
    if (len < window)
        throw DataError("recording " + rec.subject_id + "/" + rec.session_id + "/" +
                        rec.stimulus_id + " has " + std::to_string(len) +
                        " samples, shorter than window " + std::to_string(window));
    const long count = (len - window) / step + 1;
    const int C = rec.channels();

    SegmentSet set;
    set.channels = C;
    set.window = window;
    set.data.resize(static_cast<std::size_t>(count) * C * window);
    set.labels.reserve(static_cast<std::size_t>(count));
    set.provenance.reserve(static_cast<std::size_t>(count));
    for (long i = 0; i < count; ++i) {
        float* dst = set.data.data() + i * set.segment_floats();
        for (int c = 0; c < C; ++c)
            std::copy_n(rec.channel(c) + i * step, window, dst + static_cast<long>(c) * window);
        set.labels.push_back(rec.label);
        set.provenance.push_back(
            {rec.subject_id, rec.session_id, rec.stimulus_id, static_cast<int>(i)});
    }
    return set;
}

SegmentSet segment_seconds(const EegRecording& rec, double window_s, int step_samples) {
    if (!(window_s > 0.0)) throw ValueError("segment window must be > 0 seconds");
    return segment(rec, static_cast<int>(std::llround(window_s * rec.fs)), step_samples);
}

FeatureVector extract_features(const std::vector<std::vector<double>>& channels, int fs,
                               const std::vector<std::string>& channel_names) {
    if (channels.empty()) throw ValueError("extract_features on zero channels");
    if (channels.size() != channel_names.size())
        throw DimensionError("extract_features got " + std::to_string(channels.size()) +
                             " channels but " + std::to_string(channel_names.size()) +
                             " channel names");
    FeatureVector fv;
    fv.channel_names = channel_names;
    fv.band_edges = filter_bank_edges();
    const int bands = fv.bands();
    fv.rp.assign(channels.size() * bands, 0.0);
    fv.de.assign(channels.size() * bands, 0.0);
    fv.zero_energy.assign(channels.size(), false);

    for (std::size_t c = 0; c < channels.size(); ++c) {
        const auto band_signals = filter_bank(channels[c], fs);
        double total = 0.0;
        for (const auto& b : band_signals)
            for (double v : b) total += v * v;
        if (total <= 0.0) {
            fv.zero_energy[c] = true;  // silent channel: features stay zero
            continue;
        }
        const auto rp = relative_power(band_signals);
        for (int j = 0; j < bands; ++j) {
            fv.rp[c * bands + j] = rp[j];
            fv.de[c * bands + j] = differential_entropy(band_signals[j]);
        }
    }
    return fv;
}

void write_feature_header(std::ostream& os, int channels, int bands) {
    os << "subject,session,stimulus,segment_index";
    for (int c = 1; c <= channels; ++c)
        for (int b = 1; b <= bands; ++b) os << ",ch" << c << "_band" << b << "_rp";
    for (int c = 1; c <= channels; ++c)
        for (int b = 1; b <= bands; ++b) os << ",ch" << c << "_band" << b << "_de";
    os << "\n";
}

void write_feature_row(std::ostream& os, const SegmentProvenance& prov,
                       const FeatureVector& fv) {
    os << prov.subject_id << ',' << prov.session_id << ',' << prov.stimulus_id << ','
       << prov.window_index;
    os << std::setprecision(17);
    for (double v : fv.rp) os << ',' << v;
    for (double v : fv.de) os << ',' << v;
    os << "\n";
}

}  // namespace tsception
