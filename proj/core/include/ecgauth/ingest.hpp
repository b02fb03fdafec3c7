#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecgauth/record.hpp"

namespace ecgauth {

struct CatalogEntry {
    EcgRecord record;
    Split split = Split::Train;
};

/// Records plus their train/test/enroll assignment. A record lives in exactly
/// one split; the train split may be empty for pure-evaluation catalogs.
struct DatasetCatalog {
    std::vector<CatalogEntry> entries;
    SourceTag source = SourceTag::Synthetic;

    std::vector<const EcgRecord*> split(Split s) const;
    std::vector<std::string> subjects(Split s) const;  // unique, sorted
};

/// Gaussian bump parameters for one of the five characteristic waves.
struct WaveParams {
    double center_s = 0.0;     // offset from the R peak
    double width_s = 0.01;     // Gaussian sigma
    double amplitude_mv = 0.0;
};

/// Desk-scale stand-in for a real subject: a beat template built from five
/// Gaussian bumps, repeated at jittered RR intervals.
struct SyntheticSubjectParams {
    WaveParams p{-0.16, 0.025, 0.15};
    WaveParams q{-0.030, 0.008, -0.10};
    WaveParams r{0.0, 0.012, 1.00};
    WaveParams s{0.030, 0.009, -0.20};
    WaveParams t{0.24, 0.045, 0.30};
    double heart_rate_bpm = 70.0;
    double heart_rate_jitter_bpm = 0.0;
    double noise_rms_mv = 0.0;

    void validate() const;  // widths > 0, heart rate in [40, 180]

    /// Subject-specific variation of the canonical template, deterministic in seed.
    static SyntheticSubjectParams randomized(std::uint64_t seed, double noise_rms_mv = 0.0);
};

/// Synthetic record with its ground-truth fiducial positions, for detector tests.
struct SyntheticRecord {
    EcgRecord record;
    std::vector<std::size_t> r_peaks;
    std::vector<std::size_t> p_peaks;
    std::vector<std::size_t> t_peaks;
};

/// Reads a WFDB header/signal pair; formats 16 and 212 only. lead_index picks
/// the signal channel; each lead is exposed as an independent record.
EcgRecord load_wfdb(const std::filesystem::path& header_path, int lead_index = 0);
std::vector<EcgRecord> load_wfdb_all(const std::filesystem::path& header_path);

/// One value per line, or "t,value" two-column. subject_id defaults to the
/// filename stem.
EcgRecord load_csv(const std::filesystem::path& path, int fs, std::string subject_id = "");
void write_csv(const EcgRecord& record, const std::filesystem::path& path);

SyntheticRecord synth_record(const SyntheticSubjectParams& params, double duration_s, int fs,
                             std::uint64_t seed);

/// Catalog file: one `record_path,subject_id,split` line per record. Paths are
/// resolved relative to the catalog file; .hea files load all leads.
DatasetCatalog load_catalog(const std::filesystem::path& catalog_file, int csv_fs);
void write_catalog(const DatasetCatalog& catalog, const std::filesystem::path& directory,
                   const std::string& stem);

struct SyntheticCatalogOptions {
    int subjects = 20;
    int records_per_subject = 2;  // first record -> train, rest -> test
    double duration_s = 60.0;
    int fs = 500;
    double noise_rms_mv = 0.05;
    std::uint64_t seed = 1;
};

DatasetCatalog make_synthetic_catalog(const SyntheticCatalogOptions& opts);

namespace wfdb {
/// Decodes packed 12-bit two-sample groups (format 212) from a 3-byte group.
std::pair<int, int> decode_212_group(std::uint8_t b0, std::uint8_t b1, std::uint8_t b2);
}  // namespace wfdb

}  // namespace ecgauth
