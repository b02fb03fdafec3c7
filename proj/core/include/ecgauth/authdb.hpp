#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgauth/encoder.hpp"
#include "ecgauth/feature.hpp"
#include "ecgauth/segment.hpp"

namespace ecgauth {

/// Repeat-attempt policy: the user is granted access if any single attempt
/// succeeds.
struct AuthPolicy {
    int attempts = 1;  // in [1, 10]

    void validate() const;
};

/// Enrollment template store. Vectors are bound to the producing model via
/// its fingerprint; a mismatching model is rejected outright.
struct TemplateDb {
    std::map<std::string, std::vector<FeatureVector>> entries;
    double tau = 0.7;
    std::array<std::uint8_t, 32> fingerprint{};
};

TemplateDb make_db(const EncoderModel& model, double tau);

/// Stores one feature vector per segment under the identity; repeated
/// enrollment appends.
void enroll(TemplateDb& db, const std::string& identity, std::span<const Segment> segments,
            const EncoderModel& model);

struct AuthResult {
    bool accepted = false;
    double best_score = 0.0;  // max mapping score over the identity's templates
};

/// 1:1 verification against the claimed identity only. Accepts iff the best
/// stored-template score strictly exceeds tau (db default or override).
AuthResult authenticate(const TemplateDb& db, const std::string& identity,
                        const Segment& segment, const EncoderModel& model,
                        std::optional<double> tau_override = std::nullopt);

/// Any-success aggregation over policy.attempts segments.
AuthResult authenticate_repeat(const TemplateDb& db, const std::string& identity,
                               std::span<const Segment> segments, const EncoderModel& model,
                               const AuthPolicy& policy,
                               std::optional<double> tau_override = std::nullopt);

std::vector<std::uint8_t> serialize_db(const TemplateDb& db);
TemplateDb deserialize_db(std::span<const std::uint8_t> bytes);
void persist(const TemplateDb& db, const std::filesystem::path& path);
TemplateDb restore(const std::filesystem::path& path);

}  // namespace ecgauth
