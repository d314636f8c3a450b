#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "tsception/dsp.hpp"
#include "tsception/rng.hpp"

using namespace tsception;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHalfLn2PiE = 1.4189385332046727;  // 0.5*ln(2*pi*e)

FilterSpec band(double lo, double hi, int fs = 256) {
    FilterSpec spec;
    spec.low_hz = lo;
    spec.high_hz = hi;
    spec.fs = fs;
    return spec;
}

std::vector<double> tone(double freq, int fs, int n, double amp = 1.0) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = amp * std::sin(2.0 * kPi * freq * i / fs);
    return x;
}

// steady-state zero-phase gain: RMS ratio over the central half of a long tone
double tone_gain_db(const Sos& sos, double freq, int fs, int n = 4096) {
    const auto x = tone(freq, fs, n);
    const auto y = filtfilt(sos, x);
    double num = 0.0, den = 0.0;
    for (int i = n / 4; i < 3 * n / 4; ++i) {
        num += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        den += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    }
    return 10.0 * std::log10(num / den);
}

double energy(const std::vector<double>& x) {
    double e = 0.0;
    for (double v : x) e += v * v;
    return e;
}

EegRecording make_recording(long n_samples, int fs = 256) {
    EegRecording rec;
    rec.fs = fs;
    rec.channel_names = {"TP9", "AF7", "AF8", "TP10"};
    rec.label = kLowArousal;
    rec.subject_id = "sub01";
    rec.session_id = "ses01";
    rec.stimulus_id = "low";
    rec.data.assign(static_cast<std::size_t>(4 * n_samples), 0.0f);
    return rec;
}

}  // namespace

TEST_CASE("band design: 8-12 Hz at fs 256 passes mid-band, kills 4 and 16 Hz") {
    const Sos sos = design_cheby2_bandpass(band(8, 12));
    CHECK(sos.sections.size() == 4);  // order-4 prototype -> 8th order -> 4 biquads
    CHECK(tone_gain_db(sos, 10.0, 256) >= -3.0);
    CHECK(tone_gain_db(sos, 10.0, 256) <= 0.5);
    CHECK(tone_gain_db(sos, 4.0, 256) <= -40.0);
    CHECK(tone_gain_db(sos, 16.0, 256) <= -40.0);
}

TEST_CASE("every analysis band is stable and behaves as a band-pass") {
    auto check_design = [](const FilterSpec& spec) {
        const Sos sos = design_cheby2_bandpass(spec);
        CHECK(sos.max_pole_radius() < 1.0 - 1e-9);

        // geometric center: band-pass designs are symmetric on a log axis
        const double mid = std::sqrt(spec.low_hz * spec.high_hz);
        const double mid_db = tone_gain_db(sos, mid, spec.fs);
        CHECK(mid_db >= -3.0);
        CHECK(mid_db <= 3.0);

        // tone 2*stop_margin beyond each band corner: >= atten - 3 dB down
        const double probe_lo = spec.low_hz - 2.0 * spec.stop_margin_hz;
        const double probe_hi = spec.high_hz + 2.0 * spec.stop_margin_hz;
        if (probe_lo > 0.0)
            CHECK(tone_gain_db(sos, probe_lo, spec.fs) <= -(spec.stop_atten_db - 3.0));
        CHECK(tone_gain_db(sos, probe_hi, spec.fs) <= -(spec.stop_atten_db - 3.0));
    };
    for (const auto& e : filter_bank_edges()) check_design(band(e[0], e[1]));
    check_design(band(0.3, 45.0));
}

TEST_CASE("DC gain of every band design is <= -60 dB") {
    for (const auto& e : filter_bank_edges()) {
        const Sos sos = design_cheby2_bandpass(band(e[0], e[1]));
        const std::vector<double> x(4096, 100.0);
        const auto y = filtfilt(sos, x);
        double mean = 0.0;
        for (int i = 1024; i < 3072; ++i) mean += y[static_cast<std::size_t>(i)];
        mean /= 2048.0;
        CHECK(std::abs(mean) <= 100.0 * 1e-3);  // -60 dB on a 100-unit offset
    }
}

TEST_CASE("design rejects bad specifications") {
    CHECK_THROWS_AS(design_cheby2_bandpass(band(12, 8)), DesignError);
    CHECK_THROWS_AS(design_cheby2_bandpass(band(8, 8)), DesignError);
    CHECK_THROWS_AS(design_cheby2_bandpass(band(-1, 12)), DesignError);
    CHECK_THROWS_AS(design_cheby2_bandpass(band(8, 130, 256)), DesignError);
    // upper corner too close to Nyquist for the transition allowance
    CHECK_THROWS_AS(design_cheby2_bandpass(band(100, 127, 256)), DesignError);
    FilterSpec low_order = band(8, 12);
    low_order.order = 1;
    CHECK_THROWS_AS(design_cheby2_bandpass(low_order), DesignError);
    FilterSpec no_atten = band(8, 12);
    no_atten.stop_atten_db = 0.0;
    CHECK_THROWS_AS(design_cheby2_bandpass(no_atten), DesignError);
}

TEST_CASE("filtfilt has zero phase: peak cross-correlation at lag 0") {
    const Sos sos = design_cheby2_bandpass(band(8, 12));
    const int fs = 256, n = 2048;
    const auto x = tone(10.0, fs, n);
    const auto y = filtfilt(sos, x);
    int best_lag = -99;
    double best = -1e300;
    for (int lag = -8; lag <= 8; ++lag) {
        double c = 0.0;
        for (int i = 256; i < n - 256; ++i)
            c += y[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i + lag)];
        if (c > best) {
            best = c;
            best_lag = lag;
        }
    }
    CHECK(best_lag == 0);
}

TEST_CASE("filtfilt maps palindromes to palindromes") {
    const int n = 8193, c = n / 2, fs = 256;
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k <= c; ++k) {
        const double env = std::exp(-(static_cast<double>(k) * k) / (2.0 * 400.0 * 400.0));
        const double v = env * std::cos(2.0 * kPi * 10.0 * k / fs);
        x[static_cast<std::size_t>(c + k)] = v;
        x[static_cast<std::size_t>(c - k)] = v;
    }
    const auto y = filtfilt(design_cheby2_bandpass(band(8, 12)), x);
    double ymax = 0.0;
    for (double v : y) ymax = std::max(ymax, std::abs(v));
    for (int k = 0; k <= c; ++k)
        CHECK(std::abs(y[static_cast<std::size_t>(c + k)] - y[static_cast<std::size_t>(c - k)]) <=
              1e-6 * ymax);
}

TEST_CASE("filtfilt of all-zero input is exactly zero") {
    const auto y = filtfilt(design_cheby2_bandpass(band(8, 12)), std::vector<double>(200, 0.0));
    for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("filtfilt rejects signals shorter than the padding") {
    const Sos sos = design_cheby2_bandpass(band(8, 12));  // 4 sections -> padlen 24
    CHECK_THROWS_WITH_AS(filtfilt(sos, std::vector<double>(24, 1.0)),
                         doctest::Contains("24"), ValueError);
    CHECK_NOTHROW(filtfilt(sos, std::vector<double>(25, 1.0)));
}

TEST_CASE("filtfilt is a pure function: identical input, bit-identical output") {
    Rng rng(7);
    std::vector<double> x(1000);
    for (double& v : x) v = rng.normal();
    const Sos sos = design_cheby2_bandpass(band(8, 12));
    const auto y1 = filtfilt(sos, x);
    const auto y2 = filtfilt(sos, x);
    CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0);
}

TEST_CASE("preprocess: 60 Hz suppressed, 10 Hz kept, DC removed, metadata intact") {
    const int fs = 256, n = 15360;  // a full 60 s recording

    auto fill = [&](EegRecording& rec, const std::vector<double>& x) {
        for (int c = 0; c < 4; ++c)
            for (int i = 0; i < n; ++i)
                rec.data[static_cast<std::size_t>(c * n + i)] = static_cast<float>(x[static_cast<std::size_t>(i)]);
    };

    EegRecording rec = make_recording(n, fs);
    fill(rec, tone(60.0, fs, n, 50.0));
    EegRecording out = preprocess(rec);
    CHECK(out.fs == rec.fs);
    CHECK(out.channel_names == rec.channel_names);
    CHECK(out.subject_id == rec.subject_id);
    CHECK(out.session_id == rec.session_id);
    CHECK(out.stimulus_id == rec.stimulus_id);
    CHECK(out.label == rec.label);
    for (int c = 0; c < 4; ++c) {
        double ein = 0.0, eout = 0.0;
        for (int i = 0; i < n; ++i) {
            ein += static_cast<double>(rec.channel(c)[i]) * rec.channel(c)[i];
            eout += static_cast<double>(out.channel(c)[i]) * out.channel(c)[i];
        }
        CHECK(eout <= 0.01 * ein);
    }

    fill(rec, tone(10.0, fs, n, 50.0));
    out = preprocess(rec);
    {
        double ein = 0.0, eout = 0.0;
        for (int i = 0; i < n; ++i) {
            ein += static_cast<double>(rec.channel(0)[i]) * rec.channel(0)[i];
            eout += static_cast<double>(out.channel(0)[i]) * out.channel(0)[i];
        }
        CHECK(eout >= 0.8 * ein);
    }

    fill(rec, std::vector<double>(n, 100.0));
    out = preprocess(rec);
    {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += out.channel(0)[i];
        mean /= n;
        CHECK(std::abs(mean) <= 0.1);
    }
}

TEST_CASE("filter bank produces the nine published bands") {
    const auto edges = filter_bank_edges();
    REQUIRE(edges.size() == 9);
    for (int k = 1; k <= 9; ++k) {
        CHECK(edges[static_cast<std::size_t>(k - 1)][0] == 4.0 * k);
        CHECK(edges[static_cast<std::size_t>(k - 1)][1] == 4.0 * k + 4.0);
    }
}

TEST_CASE("filter bank routes a 10 Hz tone into band 2") {
    const auto bands = filter_bank(tone(10.0, 256, 2048), 256);
    REQUIRE(bands.size() == 9);
    std::vector<double> e;
    for (const auto& b : bands) e.push_back(energy(b));
    for (std::size_t i = 0; i < 9; ++i)
        if (i != 1) CHECK(e[1] >= 100.0 * e[i]);
}

TEST_CASE("filter bank rejects sampling rates below 80 Hz") {
    CHECK_THROWS_AS(filter_bank(std::vector<double>(1000, 0.0), 79), DesignError);
}

TEST_CASE("white-noise energy is partitioned across bands within 15%") {
    Rng rng(2024);
    std::vector<double> x(8192);
    for (double& v : x) v = rng.normal();
    const auto bands = filter_bank(x, 256);
    double sum = 0.0;
    for (const auto& b : bands) sum += energy(b);
    const double ref = energy(filtfilt(design_cheby2_bandpass(band(4, 40)), x));
    CHECK(sum >= 0.85 * ref);
    CHECK(sum <= 1.15 * ref);
}

TEST_CASE("relative power examples and normalization") {
    std::vector<std::vector<double>> bands(3, std::vector<double>(4, 0.0));
    bands[1] = {1.0, 2.0, 3.0, 4.0};
    auto rp = relative_power(bands);
    CHECK(rp[0] == 0.0);
    CHECK(rp[1] == 1.0);
    CHECK(rp[2] == 0.0);

    bands[2] = {4.0, 3.0, 2.0, 1.0};  // same energy as band 1
    rp = relative_power(bands);
    CHECK(rp[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rp[2] == doctest::Approx(0.5).epsilon(1e-12));

    Rng rng(5);
    std::vector<std::vector<double>> noisy(9, std::vector<double>(512));
    for (auto& b : noisy)
        for (double& v : b) v = rng.normal();
    rp = relative_power(noisy);
    double sum = 0.0;
    for (double v : rp) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    CHECK_THROWS_AS(relative_power(std::vector<std::vector<double>>(3, std::vector<double>(8, 0.0))),
                    ValueError);
}

TEST_CASE("differential entropy closed forms") {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(differential_entropy({-inv_sqrt2, inv_sqrt2}) ==
          doctest::Approx(kHalfLn2PiE).epsilon(1e-6));

    // scaling shifts DE by ln|c|
    Rng rng(11);
    std::vector<double> x(1000);
    for (double& v : x) v = rng.normal();
    const double base = differential_entropy(x);
    for (double c : {2.0, 0.5, 3.0}) {
        std::vector<double> scaled = x;
        for (double& v : scaled) v *= c;
        CHECK(differential_entropy(scaled) - base ==
              doctest::Approx(std::log(std::abs(c))).epsilon(1e-9));
    }
}

TEST_CASE("differential entropy Monte Carlo: sigma=2 Gaussian") {
    Rng rng(123);
    std::vector<double> x(100000);
    for (double& v : x) v = 2.0 * rng.normal();
    CHECK(std::abs(differential_entropy(x) - (kHalfLn2PiE + std::log(2.0))) <= 0.01);
    CHECK(std::abs(differential_entropy(x) - 2.112086) <= 0.01);
}

TEST_CASE("differential entropy rejects degenerate inputs") {
    CHECK_THROWS_AS(differential_entropy({1.0}), ValueError);
    CHECK_THROWS_AS(differential_entropy({}), ValueError);
    CHECK_THROWS_AS(differential_entropy(std::vector<double>(100, 3.25)), ValueError);
}

TEST_CASE("segmentation counts: 60 s at 256 Hz, window 1024, step 25 -> 574") {
    const EegRecording rec = make_recording(15360);
    const SegmentSet set = segment(rec, 1024, 25);
    CHECK(set.size() == 574);
    CHECK(set.channels == 4);
    CHECK(set.window == 1024);
    CHECK(segment_seconds(rec, 4.0, 25).size() == 574);
}

TEST_CASE("segmentation edge cases and the count formula") {
    EegRecording rec = make_recording(100);
    CHECK(segment(rec, 100, 25).size() == 1);   // length == window
    CHECK(segment(rec, 25, 25).size() == 4);    // step == window
    CHECK(segment(rec, 30, 25).size() == 3);    // floor((100-30)/25)+1
    CHECK_THROWS_AS(segment(make_recording(99), 100, 25), DataError);
    CHECK_THROWS_AS(segment(rec, 0, 25), ValueError);
    CHECK_THROWS_AS(segment(rec, 100, 0), ValueError);
}

TEST_CASE("segments carry label, provenance, and the right slice of data") {
    EegRecording rec = make_recording(500);
    rec.label = kHighArousal;
    for (std::size_t i = 0; i < rec.data.size(); ++i)
        rec.data[i] = static_cast<float>(i % 977);
    const SegmentSet set = segment(rec, 128, 50);
    CHECK(set.size() == 8);
    for (long s = 0; s < set.size(); ++s) {
        CHECK(set.labels[static_cast<std::size_t>(s)] == kHighArousal);
        const SegmentProvenance& p = set.provenance[static_cast<std::size_t>(s)];
        CHECK(p.subject_id == "sub01");
        CHECK(p.session_id == "ses01");
        CHECK(p.stimulus_id == "low");
        CHECK(p.window_index == static_cast<int>(s));
        for (int c = 0; c < 4; ++c)
            for (int i = 0; i < 128; ++i)
                CHECK(set.segment(s)[c * 128 + i] == rec.channel(c)[s * 50 + i]);
    }
}

TEST_CASE("extract_features: 72 dimensions, per-channel RP sums to 1") {
    Rng rng(3);
    std::vector<std::vector<double>> chans(4, std::vector<double>(1024));
    for (auto& ch : chans)
        for (double& v : ch) v = rng.normal();
    const std::vector<std::string> names = {"TP9", "AF7", "AF8", "TP10"};
    const FeatureVector fv = extract_features(chans, 256, names);
    CHECK(fv.channels() == 4);
    CHECK(fv.bands() == 9);
    CHECK(fv.rp.size() == 36);
    CHECK(fv.de.size() == 36);  // 36 + 36 = 72 features
    for (int c = 0; c < 4; ++c) {
        double sum = 0.0;
        for (int b = 0; b < 9; ++b) sum += fv.rp[static_cast<std::size_t>(c * 9 + b)];
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        CHECK_FALSE(fv.zero_energy[static_cast<std::size_t>(c)]);
    }

    // purity: same input -> identical features
    const FeatureVector fv2 = extract_features(chans, 256, names);
    CHECK(fv.rp == fv2.rp);
    CHECK(fv.de == fv2.de);
}

TEST_CASE("extract_features: tone on one channel, silence flagged elsewhere") {
    std::vector<std::vector<double>> chans(4, std::vector<double>(1024, 0.0));
    chans[0] = tone(10.0, 256, 1024);
    const FeatureVector fv =
        extract_features(chans, 256, {"TP9", "AF7", "AF8", "TP10"});
    CHECK(fv.rp[1] >= 0.99);  // channel 1, band 2 (8-12 Hz)
    for (int b = 0; b < 9; ++b)
        if (b != 1) CHECK(fv.rp[static_cast<std::size_t>(b)] <= 0.01);
    CHECK_FALSE(fv.zero_energy[0]);
    for (int c = 1; c < 4; ++c) {
        CHECK(fv.zero_energy[static_cast<std::size_t>(c)]);
        for (int b = 0; b < 9; ++b) {
            CHECK(fv.rp[static_cast<std::size_t>(c * 9 + b)] == 0.0);
            CHECK(fv.de[static_cast<std::size_t>(c * 9 + b)] == 0.0);
        }
    }
}

TEST_CASE("extract_features validates channel/name agreement") {
    std::vector<std::vector<double>> chans(2, std::vector<double>(256, 1.0));
    CHECK_THROWS_AS(extract_features(chans, 256, {"TP9", "AF7", "AF8"}), DimensionError);
    CHECK_THROWS_AS(extract_features({}, 256, {}), ValueError);
}

TEST_CASE("feature CSV layout") {
    std::ostringstream header;
    write_feature_header(header, 4, 9);
    const std::string h = header.str();
    CHECK(h.rfind("subject,session,stimulus,segment_index,ch1_band1_rp,", 0) == 0);
    CHECK(h.find(",ch4_band9_rp,ch1_band1_de,") != std::string::npos);
    CHECK(h.find(",ch4_band9_de\n") == h.size() - std::string(",ch4_band9_de\n").size());
    CHECK(std::count(h.begin(), h.end(), ',') == 4 + 72 - 1);

    FeatureVector fv;
    fv.channel_names = {"TP9", "AF7", "AF8", "TP10"};
    fv.band_edges = filter_bank_edges();
    fv.rp.assign(36, 0.25);
    fv.de.assign(36, -1.5);
    std::ostringstream row;
    write_feature_row(row, {"sub03", "ses02", "high", 17}, fv);
    const std::string r = row.str();
    CHECK(r.rfind("sub03,ses02,high,17,0.25,", 0) == 0);
    CHECK(std::count(r.begin(), r.end(), ',') == 4 + 72 - 1);
    CHECK(r.back() == '\n');
}
