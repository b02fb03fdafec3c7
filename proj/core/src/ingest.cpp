#include "ecgauth/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ecgauth/errors.hpp"
#include "ecgauth/io_util.hpp"
#include "ecgauth/rng.hpp"

namespace ecgauth {

std::vector<const EcgRecord*> DatasetCatalog::split(Split s) const {
    std::vector<const EcgRecord*> out;
    for (const auto& e : entries)
        if (e.split == s) out.push_back(&e.record);
    return out;
}

std::vector<std::string> DatasetCatalog::subjects(Split s) const {
    std::set<std::string> uniq;
    for (const auto& e : entries)
        if (e.split == s) uniq.insert(e.record.subject_id);
    return {uniq.begin(), uniq.end()};
}

// ---------------------------------------------------------------------------
// WFDB reader (formats 16 and 212)
// ---------------------------------------------------------------------------

namespace {

struct SignalInfo {
    std::string file;
    int format = 0;
    double gain = 200.0;   // WFDB default
    double baseline = 0.0;
    std::string description;
};

struct WfdbHeader {
    std::string record_name;
    int nsig = 0;
    int fs = 0;
    long long nsamples = 0;  // per signal; 0 = unknown
    std::vector<SignalInfo> signals;
};

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    return tok;
}

WfdbHeader parse_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    WfdbHeader hdr;
    std::string line;
    bool have_record_line = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tok = tokenize(line);
        if (tok.empty()) continue;
        if (!have_record_line) {
            if (tok.size() < 2) throw MalformedHeader("record line needs name and signal count");
            if (tok[0].find('/') != std::string::npos)
                throw UnsupportedFormat("multi-segment records are not supported");
            hdr.record_name = tok[0];
            try {
                hdr.nsig = std::stoi(tok[1]);
                // fs may carry a counter-frequency suffix ("360/...")
                if (tok.size() > 2) hdr.fs = static_cast<int>(std::stod(tok[2]));
                if (tok.size() > 3) hdr.nsamples = std::stoll(tok[3]);
            } catch (const std::exception&) {
                throw MalformedHeader("unparsable record line in " + path.string());
            }
            if (hdr.nsig <= 0) throw MalformedHeader("signal count must be positive");
            if (hdr.fs <= 0) throw MalformedHeader("sampling rate must be positive");
            have_record_line = true;
            continue;
        }
        if (static_cast<int>(hdr.signals.size()) == hdr.nsig) break;
        if (tok.size() < 2) throw MalformedHeader("signal line needs filename and format");
        SignalInfo sig;
        sig.file = tok[0];
        try {
            sig.format = std::stoi(tok[1]);  // ignores skew/offset suffixes
            if (tok.size() > 2) {
                // gain field: "gain", "gain(baseline)", optionally "/units"
                std::string g = tok[2];
                if (const auto slash = g.find('/'); slash != std::string::npos) g = g.substr(0, slash);
                if (const auto paren = g.find('('); paren != std::string::npos) {
                    const auto close = g.find(')', paren);
                    if (close == std::string::npos) throw MalformedHeader("unbalanced baseline");
                    sig.baseline = std::stod(g.substr(paren + 1, close - paren - 1));
                    g = g.substr(0, paren);
                    sig.gain = std::stod(g);
                } else {
                    sig.gain = std::stod(g);
                    // without an explicit baseline, WFDB falls back to adczero
                    if (tok.size() > 4) sig.baseline = std::stod(tok[4]);
                }
            }
        } catch (const MalformedHeader&) {
            throw;
        } catch (const std::exception&) {
            throw MalformedHeader("unparsable signal line in " + path.string());
        }
        if (sig.gain == 0.0) sig.gain = 200.0;
        if (tok.size() > 8) {
            sig.description = tok[8];
            for (std::size_t i = 9; i < tok.size(); ++i) sig.description += " " + tok[i];
        }
        hdr.signals.push_back(sig);
    }
    if (!have_record_line) throw MalformedHeader("empty header " + path.string());
    if (static_cast<int>(hdr.signals.size()) != hdr.nsig)
        throw MalformedHeader("header declares " + std::to_string(hdr.nsig) + " signals, found " +
                              std::to_string(hdr.signals.size()));
    return hdr;
}

int sign_extend_12(int v) { return (v & 0x800) ? v - 4096 : v; }

// Interleaved ADC stream for all signals, one of the two supported formats.
std::vector<int> decode_adc_stream(const std::vector<std::uint8_t>& bytes, int format,
                                   long long total_samples) {
    std::vector<int> adc;
    if (format == 16) {
        if (total_samples == 0) total_samples = static_cast<long long>(bytes.size() / 2);
        if (static_cast<long long>(bytes.size()) < total_samples * 2)
            throw TruncatedSignal("signal file shorter than declared length");
        adc.reserve(static_cast<std::size_t>(total_samples));
        for (long long i = 0; i < total_samples; ++i) {
            const std::uint16_t raw = static_cast<std::uint16_t>(bytes[2 * i]) |
                                      (static_cast<std::uint16_t>(bytes[2 * i + 1]) << 8);
            adc.push_back(static_cast<std::int16_t>(raw));
        }
        return adc;
    }
    if (format == 212) {
        if (total_samples == 0) total_samples = static_cast<long long>((bytes.size() / 3) * 2);
        const long long needed = (total_samples * 3 + 1) / 2;
        if (static_cast<long long>(bytes.size()) < needed)
            throw TruncatedSignal("signal file shorter than declared length");
        adc.reserve(static_cast<std::size_t>(total_samples));
        for (long long i = 0; adc.size() < static_cast<std::size_t>(total_samples); i += 3) {
            const auto [s0, s1] = wfdb::decode_212_group(
                bytes[i], bytes[i + 1],
                (i + 2 < static_cast<long long>(bytes.size())) ? bytes[i + 2] : 0);
            adc.push_back(s0);
            if (adc.size() < static_cast<std::size_t>(total_samples)) adc.push_back(s1);
        }
        return adc;
    }
    throw UnsupportedFormat("WFDB storage format " + std::to_string(format) +
                            " is not supported (formats 16 and 212 only)");
}

bool is_supported_real_fs(int fs) { return fs == 200 || fs == 360 || fs == 500 || fs == 1000; }

}  // namespace

namespace wfdb {

std::pair<int, int> decode_212_group(std::uint8_t b0, std::uint8_t b1, std::uint8_t b2) {
    const int first = sign_extend_12(((b1 & 0x0F) << 8) | b0);
    const int second = sign_extend_12(((b1 & 0xF0) << 4) | b2);
    return {first, second};
}

}  // namespace wfdb

std::vector<EcgRecord> load_wfdb_all(const std::filesystem::path& header_path) {
    const WfdbHeader hdr = parse_header(header_path);
    if (!is_supported_real_fs(hdr.fs))
        throw MalformedHeader("sampling rate " + std::to_string(hdr.fs) +
                              " Hz is not one of 200/360/500/1000");
    for (const auto& sig : hdr.signals)
        if (sig.file != hdr.signals.front().file)
            throw UnsupportedFormat("signals split across multiple files are not supported");
    const int format = hdr.signals.front().format;
    for (const auto& sig : hdr.signals)
        if (sig.format != format)
            throw UnsupportedFormat("mixed storage formats are not supported");

    const auto signal_path = header_path.parent_path() / hdr.signals.front().file;
    const auto bytes = io::read_file(signal_path);
    const long long total = hdr.nsamples > 0 ? hdr.nsamples * hdr.nsig : 0;
    const auto adc = decode_adc_stream(bytes, format, total);
    const long long per_signal = static_cast<long long>(adc.size()) / hdr.nsig;
    if (per_signal < 2LL * hdr.fs)
        throw TruncatedSignal("record shorter than 2 seconds");

    std::vector<EcgRecord> out;
    for (int lead = 0; lead < hdr.nsig; ++lead) {
        EcgRecord rec;
        rec.record_id = hdr.record_name + (hdr.nsig > 1 ? ":" + std::to_string(lead) : "");
        rec.subject_id = hdr.record_name;
        rec.fs = hdr.fs;
        rec.lead = hdr.signals[lead].description.empty() ? "ch" + std::to_string(lead)
                                                         : hdr.signals[lead].description;
        rec.samples.resize(static_cast<std::size_t>(per_signal));
        const double gain = hdr.signals[lead].gain;
        const double baseline = hdr.signals[lead].baseline;
        for (long long i = 0; i < per_signal; ++i)
            rec.samples[static_cast<std::size_t>(i)] =
                (adc[static_cast<std::size_t>(i * hdr.nsig + lead)] - baseline) / gain;
        out.push_back(std::move(rec));
    }
    return out;
}

EcgRecord load_wfdb(const std::filesystem::path& header_path, int lead_index) {
    auto all = load_wfdb_all(header_path);
    if (lead_index < 0 || lead_index >= static_cast<int>(all.size()))
        throw MalformedHeader("lead index out of range");
    return std::move(all[static_cast<std::size_t>(lead_index)]);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

EcgRecord load_csv(const std::filesystem::path& path, int fs, std::string subject_id) {
    if (fs <= 0) throw ParseError("sampling rate must be positive", 0);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    EcgRecord rec;
    rec.fs = fs;
    rec.record_id = path.stem().string();
    rec.subject_id = subject_id.empty() ? path.stem().string() : std::move(subject_id);

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::string field = line;
        if (const auto comma = line.find(','); comma != std::string::npos)
            field = line.substr(comma + 1);  // "t,value" -> value
        try {
            std::size_t used = 0;
            const double v = std::stod(field, &used);
            while (used < field.size() &&
                   (field[used] == ' ' || field[used] == '\r' || field[used] == '\t'))
                ++used;
            if (used != field.size()) throw std::invalid_argument("trailing garbage");
            rec.samples.push_back(v);
        } catch (const std::exception&) {
            throw ParseError("expected a number, got \"" + field + "\"", line_no);
        }
    }
    return rec;
}

void write_csv(const EcgRecord& record, const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(17);
    for (double v : record.samples) out << v << "\n";
    io::atomic_write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Synthetic records
// ---------------------------------------------------------------------------

void SyntheticSubjectParams::validate() const {
    for (const WaveParams* w : {&p, &q, &r, &s, &t})
        if (w->width_s <= 0.0) throw InvalidSpec("wave width must be positive");
    if (heart_rate_bpm < 40.0 || heart_rate_bpm > 180.0)
        throw InvalidSpec("heart rate must lie in [40, 180] bpm");
}

SyntheticSubjectParams SyntheticSubjectParams::randomized(std::uint64_t seed,
                                                          double noise_rms_mv) {
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull);
    SyntheticSubjectParams sp;
    const auto jitter = [&](double v, double frac) {
        return v * (1.0 + uniform_real(rng, -frac, frac));
    };
    sp.p = {jitter(-0.16, 0.2), jitter(0.025, 0.25), jitter(0.15, 0.35)};
    sp.q = {jitter(-0.030, 0.2), jitter(0.008, 0.25), jitter(-0.10, 0.35)};
    sp.r = {0.0, jitter(0.012, 0.25), jitter(1.00, 0.25)};
    sp.s = {jitter(0.030, 0.2), jitter(0.009, 0.25), jitter(-0.20, 0.35)};
    sp.t = {jitter(0.24, 0.15), jitter(0.045, 0.25), jitter(0.30, 0.35)};
    sp.heart_rate_bpm = uniform_real(rng, 55.0, 95.0);
    sp.heart_rate_jitter_bpm = uniform_real(rng, 1.0, 4.0);
    sp.noise_rms_mv = noise_rms_mv;
    return sp;
}

SyntheticRecord synth_record(const SyntheticSubjectParams& params, double duration_s, int fs,
                             std::uint64_t seed) {
    params.validate();
    if (duration_s < 2.0) throw InvalidSpec("duration must be at least 2 seconds");
    if (fs <= 0) throw InvalidSpec("sampling rate must be positive");

    const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * fs));
    SyntheticRecord out;
    out.record.fs = fs;
    out.record.samples.assign(n, 0.0);

    Rng rng(seed);
    const auto add_bump = [&](double center_s, const WaveParams& w) {
        const double c = center_s + w.center_s;
        const double lo = c - 4.0 * w.width_s;
        const double hi = c + 4.0 * w.width_s;
        const auto i0 = static_cast<long long>(std::ceil(lo * fs));
        const auto i1 = static_cast<long long>(std::floor(hi * fs));
        for (long long i = std::max(0LL, i0);
             i <= std::min(static_cast<long long>(n) - 1, i1); ++i) {
            const double dt = static_cast<double>(i) / fs - c;
            out.record.samples[static_cast<std::size_t>(i)] +=
                w.amplitude_mv * std::exp(-dt * dt / (2.0 * w.width_s * w.width_s));
        }
    };

    // Beats start 0.5 s in so the first P wave stays inside the record, and
    // stop early enough that the last T wave fits.
    const double head = 0.5;
    const double tail = params.t.center_s + 4.0 * params.t.width_s;
    double beat_time = head;
    while (beat_time + tail < duration_s) {
        for (const WaveParams* w : {&params.p, &params.q, &params.r, &params.s, &params.t})
            add_bump(beat_time, *w);
        const auto idx = [&](double offset) {
            return static_cast<std::size_t>(std::llround((beat_time + offset) * fs));
        };
        out.r_peaks.push_back(idx(0.0));
        out.p_peaks.push_back(idx(params.p.center_s));
        out.t_peaks.push_back(idx(params.t.center_s));

        const double hr = params.heart_rate_bpm +
                          uniform_real(rng, -params.heart_rate_jitter_bpm,
                                       params.heart_rate_jitter_bpm);
        beat_time += 60.0 / std::max(1.0, hr);
    }
    if (out.r_peaks.empty()) throw InvalidSpec("duration too short for a single beat");

    if (params.noise_rms_mv > 0.0)
        for (auto& v : out.record.samples) v += params.noise_rms_mv * normal(rng);

    out.record.record_id = "synth-" + std::to_string(seed);
    out.record.subject_id = "synth";
    out.record.lead = "synthetic";
    return out;
}

// ---------------------------------------------------------------------------
// Catalogs
// ---------------------------------------------------------------------------

namespace {

Split parse_split(const std::string& s, std::size_t line_no) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    if (s == "enroll") return Split::Enroll;
    throw ParseError("unknown split \"" + s + "\"", line_no);
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Test: return "test";
        case Split::Enroll: return "enroll";
    }
    return "train";
}

}  // namespace

DatasetCatalog load_catalog(const std::filesystem::path& catalog_file, int csv_fs) {
    std::ifstream in(catalog_file);
    if (!in) throw IoError("cannot open " + catalog_file.string());
    const auto base = catalog_file.parent_path();

    DatasetCatalog catalog;
    catalog.source = SourceTag::PtbLike;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ParseError("expected record_path,subject_id,split", line_no);
        const std::filesystem::path rel = line.substr(0, c1);
        const std::string subject = line.substr(c1 + 1, c2 - c1 - 1);
        std::string split_str = line.substr(c2 + 1);
        while (!split_str.empty() && (split_str.back() == '\r' || split_str.back() == ' '))
            split_str.pop_back();
        const Split split = parse_split(split_str, line_no);

        const auto path = rel.is_absolute() ? rel : base / rel;
        if (path.extension() == ".hea") {
            for (auto& rec : load_wfdb_all(path)) {
                rec.subject_id = subject;
                catalog.entries.push_back({std::move(rec), split});
            }
        } else {
            catalog.entries.push_back({load_csv(path, csv_fs, subject), split});
        }
    }
    return catalog;
}

void write_catalog(const DatasetCatalog& catalog, const std::filesystem::path& directory,
                   const std::string& stem) {
    std::filesystem::create_directories(directory);
    std::ostringstream index;
    for (std::size_t i = 0; i < catalog.entries.size(); ++i) {
        const auto& e = catalog.entries[i];
        const std::string name = e.record.record_id + ".csv";
        write_csv(e.record, directory / name);
        index << name << "," << e.record.subject_id << "," << split_name(e.split) << "\n";
    }
    io::atomic_write_text(directory / (stem + ".catalog"), index.str());
}

DatasetCatalog make_synthetic_catalog(const SyntheticCatalogOptions& opts) {
    DatasetCatalog catalog;
    catalog.source = SourceTag::Synthetic;
    for (int s = 0; s < opts.subjects; ++s) {
        const auto params =
            SyntheticSubjectParams::randomized(opts.seed + 1000ull * s, opts.noise_rms_mv);
        for (int r = 0; r < opts.records_per_subject; ++r) {
            auto sr = synth_record(params, opts.duration_s, opts.fs,
                                   opts.seed + 1000ull * s + 17ull * (r + 1));
            sr.record.subject_id = "S" + std::to_string(s);
            sr.record.record_id = "S" + std::to_string(s) + "R" + std::to_string(r);
            catalog.entries.push_back(
                {std::move(sr.record), r == 0 ? Split::Train : Split::Test});
        }
    }
    return catalog;
}

}  // namespace ecgauth
