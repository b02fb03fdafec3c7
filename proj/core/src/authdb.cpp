#include "ecgauth/authdb.hpp"

#include <algorithm>

#include "ecgauth/errors.hpp"
#include "ecgauth/io_util.hpp"
#include "ecgauth/metric.hpp"

namespace ecgauth {

void AuthPolicy::validate() const {
    if (attempts < 1 || attempts > 10) throw InvalidSpec("attempts must lie in [1, 10]");
}

namespace {

constexpr std::uint8_t kDbVersion = 1;
constexpr std::array<std::uint8_t, 4> kDbMagic = {'E', 'C', 'G', 'T'};

void check_model(const TemplateDb& db, const EncoderModel& model) {
    if (model_fingerprint(model) != db.fingerprint)
        throw ModelMismatch("model fingerprint does not match the template database");
}

}  // namespace

TemplateDb make_db(const EncoderModel& model, double tau) {
    TemplateDb db;
    db.tau = tau;
    db.fingerprint = model_fingerprint(model);
    return db;
}

void enroll(TemplateDb& db, const std::string& identity, std::span<const Segment> segments,
            const EncoderModel& model) {
    if (segments.empty()) throw InvalidSpec("enrollment needs at least one segment");
    check_model(db, model);
    std::vector<FeatureVector> fresh;
    for (const Segment& s : segments) {
        FeatureVector fv = forward(model, s);
        if (fv.values.size() != kFeatureDim)
            throw ShapeMismatch("model does not emit 2304-dimensional features");
        // A collapsed embedding can never be matched; refuse it up front.
        const auto [lo, hi] = std::minmax_element(fv.values.begin(), fv.values.end());
        if (*lo == *hi) throw DegenerateVector("constant feature vector cannot be enrolled");
        fresh.push_back(std::move(fv));
    }
    auto& list = db.entries[identity];
    for (auto& fv : fresh) list.push_back(std::move(fv));
}

AuthResult authenticate(const TemplateDb& db, const std::string& identity,
                        const Segment& segment, const EncoderModel& model,
                        std::optional<double> tau_override) {
    check_model(db, model);
    const auto it = db.entries.find(identity);
    if (it == db.entries.end()) throw UnknownIdentity("identity \"" + identity + "\" not enrolled");

    const FeatureVector candidate = forward(model, segment);
    double best = 0.0;
    for (const FeatureVector& stored : it->second)
        best = std::max(best, mapping_score(candidate, stored).value);
    const double tau = tau_override.value_or(db.tau);
    return {best > tau, best};
}

AuthResult authenticate_repeat(const TemplateDb& db, const std::string& identity,
                               std::span<const Segment> segments, const EncoderModel& model,
                               const AuthPolicy& policy, std::optional<double> tau_override) {
    policy.validate();
    if (static_cast<int>(segments.size()) != policy.attempts)
        throw InvalidSpec("segment count must equal policy.attempts");
    AuthResult overall;
    for (const Segment& s : segments) {
        const AuthResult one = authenticate(db, identity, s, model, tau_override);
        overall.best_score = std::max(overall.best_score, one.best_score);
        if (one.accepted) {
            overall.accepted = true;
            break;  // any-success
        }
    }
    return overall;
}

// ---------------------------------------------------------------------------
// Persistence: magic "ECGT", version, fingerprint, tau, entries, CRC32
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> serialize_db(const TemplateDb& db) {
    io::ByteWriter w;
    w.raw(kDbMagic);
    w.u8(kDbVersion);
    w.raw(db.fingerprint);
    w.f64(db.tau);
    w.u32(static_cast<std::uint32_t>(db.entries.size()));
    for (const auto& [identity, vectors] : db.entries) {
        w.str(identity);
        w.u32(static_cast<std::uint32_t>(vectors.size()));
        for (const FeatureVector& fv : vectors) {
            w.str(fv.record_id);
            w.str(fv.subject_id);
            w.u32(static_cast<std::uint32_t>(fv.values.size()));
            for (double v : fv.values) w.f64(v);
        }
    }
    auto bytes = w.take();
    io::ByteWriter tail;
    tail.u32(io::crc32(bytes));
    bytes.insert(bytes.end(), tail.bytes().begin(), tail.bytes().end());
    return bytes;
}

TemplateDb deserialize_db(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || !std::equal(kDbMagic.begin(), kDbMagic.end(), bytes.begin()))
        throw BadMagic("not a template database file");
    if (bytes.size() < 5) throw ChecksumMismatch("template database truncated");
    if (bytes[4] != kDbVersion)
        throw VersionMismatch("template database version " + std::to_string(bytes[4]) +
                              " not supported");
    if (bytes.size() < 9) throw ChecksumMismatch("template database truncated");
    const auto payload = bytes.subspan(0, bytes.size() - 4);
    io::ByteReader crc_reader(bytes.subspan(bytes.size() - 4));
    if (io::crc32(payload) != crc_reader.u32())
        throw ChecksumMismatch("template database checksum mismatch");

    io::ByteReader r(payload.subspan(5));
    TemplateDb db;
    r.raw(db.fingerprint);
    db.tau = r.f64();
    const auto identities = r.u32();
    for (std::uint32_t i = 0; i < identities; ++i) {
        const std::string identity = r.str();
        const auto count = r.u32();
        auto& list = db.entries[identity];
        for (std::uint32_t k = 0; k < count; ++k) {
            FeatureVector fv;
            fv.record_id = r.str();
            fv.subject_id = r.str();
            const auto dim = r.u32();
            if (dim != kFeatureDim) throw ShapeMismatch("stored vector is not 2304-dimensional");
            fv.values.resize(dim);
            for (auto& v : fv.values) v = r.f64();
            list.push_back(std::move(fv));
        }
    }
    if (!r.exhausted()) throw IoError("trailing bytes in template database");
    return db;
}

void persist(const TemplateDb& db, const std::filesystem::path& path) {
    io::atomic_write_file(path, serialize_db(db));
}

TemplateDb restore(const std::filesystem::path& path) {
    return deserialize_db(io::read_file(path));
}

}  // namespace ecgauth
