#include "ecgauth/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "ecgauth/errors.hpp"

namespace ecgauth {

// ---------------------------------------------------------------------------
// Butterworth bandpass design
// ---------------------------------------------------------------------------

void FilterSpec::validate(int fs) const {
    if (fs <= 0) throw InvalidSpec("sampling rate must be positive");
    if (!(low_cut_hz > 0.0) || !(low_cut_hz < high_cut_hz) || !(high_cut_hz < fs / 2.0))
        throw InvalidSpec("cutoffs must satisfy 0 < low < high < fs/2");
    if (order <= 0 || order % 2 != 0) throw InvalidSpec("bandpass order must be a positive even number");
}

std::vector<Biquad> design_butterworth_bandpass(const FilterSpec& spec, int fs) {
    spec.validate(fs);
    using cd = std::complex<double>;
    const double pi = 3.14159265358979323846;
    const int np = spec.order / 2;  // analog lowpass prototype order

    // Prototype poles on the unit circle, left half-plane.
    std::vector<cd> proto(np);
    for (int k = 0; k < np; ++k) {
        const double theta = pi / 2.0 + pi * (2.0 * k + 1.0) / (2.0 * np);
        proto[k] = cd(std::cos(theta), std::sin(theta));
    }

    // Prewarped band edges for the bilinear transform.
    const double k_bl = 2.0 * fs;
    const double wl = k_bl * std::tan(pi * spec.low_cut_hz / fs);
    const double wh = k_bl * std::tan(pi * spec.high_cut_hz / fs);
    const double bw = wh - wl;
    const double w0_sq = wl * wh;

    // Lowpass-to-bandpass: each prototype pole maps to a pair.
    std::vector<cd> analog_poles;
    analog_poles.reserve(static_cast<std::size_t>(2 * np));
    for (const cd& p : proto) {
        const cd disc = std::sqrt(p * p * (bw * bw) - 4.0 * w0_sq);
        analog_poles.push_back(0.5 * (p * bw + disc));
        analog_poles.push_back(0.5 * (p * bw - disc));
    }

    // Bilinear transform. The np analog zeros at s=0 land on z=+1; the np
    // zeros at infinity land on z=-1.
    std::vector<cd> digital_poles;
    digital_poles.reserve(analog_poles.size());
    cd pole_prod(1.0, 0.0);
    for (const cd& s : analog_poles) {
        digital_poles.push_back((1.0 + s / k_bl) / (1.0 - s / k_bl));
        pole_prod *= (k_bl - s);
    }
    const double analog_gain = std::pow(bw, np);
    const double zero_prod = std::pow(k_bl, np);  // from the zeros at s=0
    const double gain = analog_gain * zero_prod / pole_prod.real();

    // Conjugate pairs must sit next to each other before pairing into stages.
    std::sort(digital_poles.begin(), digital_poles.end(), [](const cd& a, const cd& b) {
        if (std::abs(a.imag()) != std::abs(b.imag()))
            return std::abs(a.imag()) > std::abs(b.imag());
        return a.imag() > b.imag();
    });

    // Each stage takes one conjugate pole pair and one (+1, -1) zero pair,
    // giving the z^2 - 1 numerator.
    std::vector<Biquad> sos(static_cast<std::size_t>(np));
    for (int s = 0; s < np; ++s) {
        const cd p0 = digital_poles[static_cast<std::size_t>(2 * s)];
        const cd p1 = digital_poles[static_cast<std::size_t>(2 * s + 1)];
        Biquad& q = sos[static_cast<std::size_t>(s)];
        q.b0 = 1.0;
        q.b1 = 0.0;
        q.b2 = -1.0;
        q.a1 = -(p0 + p1).real();
        q.a2 = (p0 * p1).real();
    }
    sos[0].b0 *= gain;
    sos[0].b1 *= gain;
    sos[0].b2 *= gain;
    return sos;
}

// ---------------------------------------------------------------------------
// Zero-phase filtering
// ---------------------------------------------------------------------------

namespace {

// Steady-state DF2T state for a unit-amplitude constant input, so filtering
// starts without a step transient.
std::pair<double, double> steady_state_zi(const Biquad& q) {
    const double dc = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double s1 = q.b1 + q.b2 - (q.a1 + q.a2) * dc;
    const double s2 = q.b2 - q.a2 * dc;
    return {s1, s2};
}

void filter_in_place(const Biquad& q, std::vector<double>& x) {
    if (x.empty()) return;
    auto [s1, s2] = steady_state_zi(q);
    s1 *= x[0];
    s2 *= x[0];
    for (double& v : x) {
        const double y = q.b0 * v + s1;
        s1 = q.b1 * v - q.a1 * y + s2;
        s2 = q.b2 * v - q.a2 * y;
        v = y;
    }
}

}  // namespace

std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return {};

    const std::size_t want_pad = 3 * (2 * sos.size() + 1);
    const std::size_t pad = std::min(want_pad, n - 1);

    // Odd reflection about the end samples.
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    for (const Biquad& q : sos) filter_in_place(q, ext);
    std::reverse(ext.begin(), ext.end());
    for (const Biquad& q : sos) filter_in_place(q, ext);
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

EcgRecord bandpass(const EcgRecord& record, const FilterSpec& spec) {
    const auto sos = design_butterworth_bandpass(spec, record.fs);
    EcgRecord out = record;
    out.samples = filtfilt(sos, record.samples);
    return out;
}

// ---------------------------------------------------------------------------
// Resampling and normalization
// ---------------------------------------------------------------------------

EcgRecord resample(const EcgRecord& record, int target_fs) {
    if (target_fs <= 0) throw InvalidSpec("target sampling rate must be positive");
    if (target_fs == record.fs) return record;

    const std::size_t n = record.samples.size();
    EcgRecord out = record;
    out.fs = target_fs;
    const auto out_len = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * target_fs / record.fs));
    out.samples.assign(out_len, 0.0);
    const double step = static_cast<double>(record.fs) / target_fs;
    for (std::size_t j = 0; j < out_len; ++j) {
        const double pos = static_cast<double>(j) * step;
        const auto i0 = static_cast<std::size_t>(pos);
        if (i0 + 1 >= n) {
            out.samples[j] = record.samples[n - 1];
        } else {
            const double frac = pos - static_cast<double>(i0);
            out.samples[j] = record.samples[i0] * (1.0 - frac) + record.samples[i0 + 1] * frac;
        }
    }
    return out;
}

std::vector<double> resample_to_length(std::span<const double> x, std::size_t out_len) {
    if (x.empty()) throw InvalidSpec("cannot resample an empty run");
    std::vector<double> out(out_len);
    if (out_len == 0) return out;
    if (x.size() == 1 || out_len == 1) {
        std::fill(out.begin(), out.end(), x[0]);
        return out;
    }
    const double step = static_cast<double>(x.size() - 1) / static_cast<double>(out_len - 1);
    for (std::size_t j = 0; j < out_len; ++j) {
        const double pos = static_cast<double>(j) * step;
        auto i0 = static_cast<std::size_t>(pos);
        if (i0 + 1 >= x.size()) i0 = x.size() - 2;
        const double frac = pos - static_cast<double>(i0);
        out[j] = x[i0] * (1.0 - frac) + x[i0 + 1] * frac;
    }
    return out;
}

std::vector<double> normalize(std::span<const double> x) {
    if (x.empty()) throw DegenerateSignal("cannot normalize an empty sequence");
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it, hi = *hi_it;
    if (lo == hi) throw DegenerateSignal("constant sequence has no amplitude range");
    // Already full-range input maps to itself; returning it unchanged makes
    // normalization exactly idempotent.
    if (lo == -512.0 && hi == 512.0) return {x.begin(), x.end()};
    std::vector<double> out(x.size());
    const double range = hi - lo;
    // Per-element division keeps the endpoints exact: (hi-lo)/(hi-lo) is
    // exactly 1, so min maps to -512 and max to +512 bit-exactly.
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = ((x[i] - lo) / range) * 1024.0 - 512.0;
    return out;
}

// ---------------------------------------------------------------------------
// Pan-Tompkins QRS detection
// ---------------------------------------------------------------------------

namespace {

struct Candidate {
    std::size_t index;  // position in the integrated signal
    double value;
};

std::size_t map_to_r_index(std::span<const double> filtered, std::size_t mwi_peak,
                           std::size_t window) {
    // The integrator output peaks after the QRS; the R wave is the largest
    // filtered-signal magnitude within one window before it.
    const std::size_t lo = mwi_peak > window ? mwi_peak - window : 0;
    const std::size_t hi = std::min(mwi_peak, filtered.size() - 1);
    std::size_t best = lo;
    for (std::size_t i = lo; i <= hi; ++i)
        if (std::abs(filtered[i]) > std::abs(filtered[best])) best = i;
    return best;
}

}  // namespace

PeakList detect_r_peaks(const EcgRecord& record) {
    if (record.fs < 100) throw InvalidSpec("QRS detection needs fs >= 100 Hz");
    const std::size_t n = record.samples.size();
    if (n < 2 * static_cast<std::size_t>(record.fs))
        throw InvalidSpec("QRS detection needs at least 2 seconds of signal");
    const int fs = record.fs;

    const FilterSpec qrs_band{5.0, 15.0, 4};
    const auto sos = design_butterworth_bandpass(qrs_band, fs);
    const std::vector<double> bp = filtfilt(sos, record.samples);

    // Centered five-point derivative keeps the squared slope aligned with R.
    std::vector<double> sq(n, 0.0);
    for (std::size_t i = 2; i + 2 < n; ++i) {
        const double d = (-bp[i - 2] - 2.0 * bp[i - 1] + 2.0 * bp[i + 1] + bp[i + 2]) / 8.0;
        sq[i] = d * d;
    }

    const std::size_t window = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                            std::llround(0.150 * fs)));
    std::vector<double> mwi(n, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += sq[i];
        if (i >= window) acc -= sq[i - window];
        mwi[i] = acc / static_cast<double>(std::min(i + 1, window));
    }

    if (*std::max_element(mwi.begin(), mwi.end()) <= 0.0)
        throw NoPeaksFound("signal has no energy in the QRS band");

    // Threshold learning phase over the first two seconds.
    const std::size_t learn = std::min(n, static_cast<std::size_t>(2 * fs));
    double spk = 0.25 * *std::max_element(mwi.begin(), mwi.begin() + static_cast<std::ptrdiff_t>(learn));
    double npk = 0.5 * std::accumulate(mwi.begin(), mwi.begin() + static_cast<std::ptrdiff_t>(learn), 0.0) /
                 static_cast<double>(learn);
    double threshold1 = npk + 0.25 * (spk - npk);

    const std::size_t refractory = static_cast<std::size_t>(std::llround(0.200 * fs));
    std::vector<std::size_t> qrs_mwi;  // accepted peaks, integrator timebase
    std::vector<Candidate> since_last;  // rejected candidates for search-back
    std::vector<double> rr_history;
    double rr_avg = static_cast<double>(fs);

    const auto accept = [&](std::size_t idx, double value, bool searchback) {
        if (searchback)
            spk = 0.25 * value + 0.75 * spk;
        else
            spk = 0.125 * value + 0.875 * spk;
        if (!qrs_mwi.empty()) {
            rr_history.push_back(static_cast<double>(idx - qrs_mwi.back()));
            if (rr_history.size() > 8) rr_history.erase(rr_history.begin());
            rr_avg = std::accumulate(rr_history.begin(), rr_history.end(), 0.0) /
                     static_cast<double>(rr_history.size());
        }
        qrs_mwi.push_back(idx);
        since_last.clear();
    };

    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1])) continue;  // local maxima only
        const bool in_refractory = !qrs_mwi.empty() && i - qrs_mwi.back() < refractory;
        if (!in_refractory && mwi[i] > threshold1) {
            accept(i, mwi[i], false);
        } else {
            npk = 0.125 * mwi[i] + 0.875 * npk;
            if (!in_refractory) since_last.push_back({i, mwi[i]});
        }
        threshold1 = npk + 0.25 * (spk - npk);

        // Search-back with the lighter threshold when a beat seems missed.
        if (!qrs_mwi.empty() && static_cast<double>(i - qrs_mwi.back()) > 1.66 * rr_avg &&
            !since_last.empty()) {
            const auto best = std::max_element(
                since_last.begin(), since_last.end(),
                [](const Candidate& a, const Candidate& b) { return a.value < b.value; });
            if (best->value > 0.5 * threshold1) {
                accept(best->index, best->value, true);
                threshold1 = npk + 0.25 * (spk - npk);
            }
        }
    }

    if (qrs_mwi.empty()) throw NoPeaksFound("no QRS complexes above threshold");

    PeakList peaks;
    peaks.kind = PeakKind::R;
    peaks.fs = fs;
    for (std::size_t idx : qrs_mwi) peaks.indices.push_back(map_to_r_index(bp, idx, window));
    std::sort(peaks.indices.begin(), peaks.indices.end());
    peaks.indices.erase(std::unique(peaks.indices.begin(), peaks.indices.end()),
                        peaks.indices.end());

    // Enforce the 0.2 s refractory on the mapped positions, keeping the
    // stronger of two colliding peaks.
    std::vector<std::size_t> cleaned;
    for (std::size_t idx : peaks.indices) {
        if (!cleaned.empty() && idx - cleaned.back() < refractory) {
            if (std::abs(bp[idx]) > std::abs(bp[cleaned.back()])) cleaned.back() = idx;
        } else {
            cleaned.push_back(idx);
        }
    }
    peaks.indices = std::move(cleaned);
    return peaks;
}

// ---------------------------------------------------------------------------
// P/T delineation
// ---------------------------------------------------------------------------

namespace {

// Centered moving average. P and T waves live well below 15 Hz, so a short
// box smooths broadband noise without moving symmetric peaks. The support
// stays compact enough that the R skirt cannot leak into the P window.
std::vector<double> smooth_for_delineation(std::span<const double> x, int fs) {
    const long long half = std::max(1LL, static_cast<long long>(std::llround(0.035 * fs)));
    const auto n = static_cast<long long>(x.size());
    std::vector<double> out(x.size());
    double acc = 0.0;
    long long left = 0, right = -1;
    for (long long i = 0; i < n; ++i) {
        const long long want_left = std::max(0LL, i - half);
        const long long want_right = std::min(n - 1, i + half);
        while (right < want_right) acc += x[static_cast<std::size_t>(++right)];
        while (left < want_left) acc -= x[static_cast<std::size_t>(left++)];
        out[static_cast<std::size_t>(i)] = acc / static_cast<double>(right - left + 1);
    }
    return out;
}

}  // namespace

std::vector<BeatFiducials> delineate_beats(const EcgRecord& record, const PeakList& r_peaks) {
    if (r_peaks.indices.empty()) throw InvalidSpec("delineation needs at least one R peak");
    const auto n = static_cast<long long>(record.samples.size());
    const int fs = record.fs;
    const auto at = [&](double seconds) {
        return static_cast<long long>(std::llround(seconds * fs));
    };
    const std::vector<double> smooth = smooth_for_delineation(record.samples, fs);

    struct TWindow {
        long long lo = 0, hi = -1;
    };
    std::vector<TWindow> t_windows(r_peaks.indices.size());
    for (std::size_t k = 0; k < r_peaks.indices.size(); ++k) {
        const auto rr = static_cast<long long>(r_peaks.indices[k]);
        const long long lo = rr + at(0.08), hi = rr + at(0.40);
        if (lo >= 0 && hi < n && lo <= hi) t_windows[k] = {lo, hi};
    }

    // The noise-reduction high-pass leaves rebound lobes of the opposite sign
    // around QRS and T, and their magnitude can rival a small T wave. The T
    // polarity is consistent within a lead, so it is voted once across beats
    // on the largest-magnitude sample per window, and the per-beat search
    // then follows the signed signal only.
    double polarity_vote = 0.0;
    for (const TWindow& w : t_windows) {
        if (w.hi < w.lo) continue;
        long long best = w.lo;
        for (long long i = w.lo; i <= w.hi; ++i)
            if (std::abs(smooth[static_cast<std::size_t>(i)]) >
                std::abs(smooth[static_cast<std::size_t>(best)]))
                best = i;
        polarity_vote += smooth[static_cast<std::size_t>(best)] > 0.0 ? 1.0 : -1.0;
    }
    const double polarity = polarity_vote >= 0.0 ? 1.0 : -1.0;

    std::vector<BeatFiducials> beats;
    beats.reserve(r_peaks.indices.size());
    for (std::size_t k = 0; k < r_peaks.indices.size(); ++k) {
        const std::size_t r = r_peaks.indices[k];
        BeatFiducials beat;
        beat.r = r;
        const auto rr = static_cast<long long>(r);

        const long long p_lo = rr - at(0.24), p_hi = rr - at(0.06);
        if (p_lo >= 0 && p_hi < n && p_lo <= p_hi) {
            long long best = p_lo;
            for (long long i = p_lo; i <= p_hi; ++i)
                if (smooth[static_cast<std::size_t>(i)] > smooth[static_cast<std::size_t>(best)])
                    best = i;
            beat.p = static_cast<std::size_t>(best);
        }

        const TWindow& w = t_windows[k];
        if (w.hi >= w.lo) {
            long long best = w.lo;
            for (long long i = w.lo; i <= w.hi; ++i)
                if (polarity * smooth[static_cast<std::size_t>(i)] >
                    polarity * smooth[static_cast<std::size_t>(best)])
                    best = i;
            beat.t = static_cast<std::size_t>(best);
        }
        beats.push_back(beat);
    }
    return beats;
}

std::pair<PeakList, PeakList> delineate_pt(const EcgRecord& record, const PeakList& r_peaks) {
    const auto beats = delineate_beats(record, r_peaks);
    PeakList p{PeakKind::P, {}, record.fs};
    PeakList t{PeakKind::T, {}, record.fs};
    for (const auto& beat : beats) {
        if (beat.p) p.indices.push_back(*beat.p);
        if (beat.t) t.indices.push_back(*beat.t);
    }
    return {std::move(p), std::move(t)};
}

}  // namespace ecgauth
