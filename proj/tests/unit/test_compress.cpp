#include <doctest.h>

#include <cmath>

#include "corpus.hpp"
#include "ecgauth/compress.hpp"
#include "ecgauth/errors.hpp"
#include "ecgauth/rng.hpp"
#include "oracles.hpp"

using namespace ecgauth;

namespace {

// Conv(1->1, k3) over a length-10 input, the cost-model worked example.
EncoderModel toy_line_model(double weight_value, double bias_value) {
    EncoderModel m = EncoderModel::build(
        {LayerSpec::conv(1, 1, 3), LayerSpec::flatten()}, 10, 1);
    std::fill(m.conv[0].w.begin(), m.conv[0].w.end(), weight_value);
    m.conv[0].b = {bias_value};
    return m;
}

}  // namespace

TEST_CASE("quantization of single weights") {
    EncoderModel m = toy_line_model(0.5, 0.0);
    const EncoderModel q3 = quantize_model(m, 3);
    CHECK(q3.conv[0].qw[0] == 4);  // 0.5 * 2^3, reconstructs exactly
    CHECK(static_cast<double>(q3.conv[0].qw[0]) / 8.0 == 0.5);

    m.conv[0].w = {0.7, -0.3, 0.7};
    const EncoderModel q8 = quantize_model(m, 8);
    CHECK(q8.conv[0].qw[0] == 179);
    CHECK(static_cast<double>(q8.conv[0].qw[0]) / 256.0 == doctest::Approx(0.69921875));
    const EncoderModel q4 = quantize_model(m, 4);
    CHECK(q4.conv[0].qw[1] == -5);  // round(-4.8), half away from zero
    CHECK(static_cast<double>(q4.conv[0].qw[1]) / 16.0 == doctest::Approx(-0.3125));

    CHECK_THROWS_AS(quantize_model(m, 1), InvalidSpec);
    CHECK_THROWS_AS(quantize_model(m, 25), InvalidSpec);
}

TEST_CASE("quantization reconstruction error bound") {
    const EncoderModel model = EncoderModel::canonical(3);
    for (int n : {4, 8, 16}) {
        const EncoderModel q = quantize_model(model, n);
        const double bound = std::pow(2.0, -n - 1);
        const double scale = std::pow(2.0, -n);
        for (std::size_t li = 0; li < model.conv.size(); ++li)
            for (std::size_t i = 0; i < model.conv[li].w.size(); ++i) {
                const double rec = static_cast<double>(q.conv[li].qw[i]) * scale;
                REQUIRE(std::abs(model.conv[li].w[i] - rec) <= bound);
            }
    }
}

TEST_CASE("shift_add_multiply worked examples") {
    // One set bit with net shift 3: 2 << 3 = 16.
    CHECK(shift_add_multiply(2, 8) == 16);

    ShiftAddOps ops;
    CHECK(shift_add_multiply(123, 0, &ops) == 0);
    CHECK(ops.shifts == 0);
    CHECK(ops.adds == 0);
    CHECK(ops.inversions == 0);

    ops = {};
    CHECK(shift_add_multiply(7, -5, &ops) == -35);
    CHECK(ops.shifts == 2);
    CHECK(ops.adds == 1);
    CHECK(ops.inversions == 1);
}

TEST_CASE("shift_add_multiply is exact on a randomized slice") {
    Rng rng(17);
    for (int i = 0; i < 100000; ++i) {
        const auto n = static_cast<std::int64_t>(uniform_index(rng, 2u << 20)) - (1 << 20);
        const auto y = static_cast<std::int64_t>(uniform_index(rng, 2u << 12)) - (1 << 12);
        REQUIRE(shift_add_multiply(n, y) == n * y);
    }
}

TEST_CASE("shift_add_multiply overflow is an error") {
    CHECK_THROWS_AS(shift_add_multiply(std::int64_t{1} << 62, 4), AccumulatorOverflow);
    CHECK_THROWS_AS(shift_add_multiply(std::int64_t{1} << 62, 3), AccumulatorOverflow);
}

TEST_CASE("quantized_forward equals the fixed-point reference") {
    const EncoderModel model = corpus::micro_model(19, 200);
    const EncoderModel q = quantize_model(model, 12);
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(200);
        for (auto& v : x) v = uniform_real(rng, -512.0, 512.0);
        const auto got = quantized_forward(q, x);
        const auto expect = oracle::fixed_point_reference_forward(q, x);
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            REQUIRE(oracle::rel_error(got[i], expect[i]) < 1e-9);
    }
}

TEST_CASE("quantized_forward tracks the full-precision model at n=16") {
    const EncoderModel model = EncoderModel::canonical(21);
    const EncoderModel q16 = quantize_model(model, 16);
    const Segment seg = corpus::segment(21);
    const auto full = forward(model, seg.values);
    const auto quant = quantized_forward(q16, seg.values);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        worst = std::max(worst, std::abs(full[i] - quant[i]));
        scale = std::max(scale, std::abs(full[i]));
    }
    CHECK(worst <= 2e-3 * scale);
}

TEST_CASE("quantized_forward on all-zero weights") {
    EncoderModel model = corpus::micro_model(25, 100);
    for (auto& t : model.conv) {
        std::fill(t.w.begin(), t.w.end(), 0.0);
        std::fill(t.b.begin(), t.b.end(), 0.0);
    }
    const EncoderModel q = quantize_model(model, 8);
    std::vector<double> x(100, 37.0);
    for (double v : quantized_forward(q, x)) CHECK(v == 0.0);
}

TEST_CASE("feature deviation shrinks as quantization precision grows") {
    const EncoderModel model = EncoderModel::canonical(29);
    const Segment seg = corpus::segment(29);
    const auto full = forward(model, seg.values);
    double prev = 1e300;
    for (int n : {4, 8, 16}) {
        const auto q = quantized_forward(quantize_model(model, n), seg.values);
        double worst = 0.0;
        for (std::size_t i = 0; i < full.size(); ++i)
            worst = std::max(worst, std::abs(full[i] - q[i]));
        CHECK(worst < prev);
        prev = worst;
    }
}

TEST_CASE("prune selects the smallest magnitudes globally") {
    EncoderModel m = EncoderModel::build(
        {LayerSpec::conv(1, 2, 5), LayerSpec::flatten()}, 16, 1);
    m.conv[0].w = {1.0, -2.0, 3.0, -4.0, 5.0, -6.0, 7.0, -8.0, 9.0, -10.0};
    m.conv[0].b = {0.0, 0.0};

    const auto [pruned, mask] = prune(m, 0.2);
    CHECK(mask.pruned_count() == 2);
    CHECK(pruned.conv[0].w[0] == 0.0);  // |1|
    CHECK(pruned.conv[0].w[1] == 0.0);  // |-2|
    CHECK(pruned.conv[0].w[2] == 3.0);
    CHECK(pruned.precision == PrecisionKind::Pruned);
    CHECK(mask.keep[0] == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 1, 1, 1, 1});

    const auto [same, identity] = prune(m, 0.0);
    CHECK(identity.pruned_count() == 0);
    CHECK(same.conv[0].w == m.conv[0].w);
}

TEST_CASE("prune zeroes exactly ceil(sparsity * weights) entries") {
    const EncoderModel model = EncoderModel::canonical(31);
    std::size_t total = 0;
    for (const auto& t : model.conv) total += t.w.size();
    const auto [pruned, mask] = prune(model, 0.2);
    const auto expected = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(total)));
    CHECK(mask.pruned_count() == expected);
    std::size_t zeros = 0;
    for (const auto& t : pruned.conv)
        for (double w : t.w)
            if (w == 0.0) ++zeros;
    CHECK(zeros == expected);
    CHECK_THROWS_AS(prune(quantize_model(model, 8), 0.1), Error);
}

TEST_CASE("cost model on the worked toy layer") {
    // Full precision, zero bias: 10 positions x 3 taps.
    const CostReport full = cost_report(toy_line_model(0.5, 0.0));
    CHECK(full.multiplications == 30);
    CHECK(full.additions == 30);
    CHECK(full.inversions == 0);
    CHECK(full.bit_shifts == 0);
    CHECK(full.cpu_cycles() == 3 * 30 + 30);

    // Quantized with every |y| of popcount 2, positive, plus a real bias:
    // 60 shifts, 60 + 10 additions, no multiplications.
    const EncoderModel q = quantize_model(toy_line_model(0.75, 0.25), 2);  // y = 3, qb = 1
    CHECK(q.conv[0].qw == std::vector<std::int64_t>{3, 3, 3});
    const CostReport qr = cost_report(q);
    CHECK(qr.multiplications == 0);
    CHECK(qr.bit_shifts == 60);
    CHECK(qr.additions == 70);
    CHECK(qr.inversions == 0);

    // Negative weights add one inversion per application.
    const EncoderModel qneg = quantize_model(toy_line_model(-0.75, 0.0), 2);
    CHECK(cost_report(qneg).inversions == 30);

    // Pruning away taps removes their operations proportionally.
    EncoderModel half = toy_line_model(0.5, 0.0);
    half.conv[0].w = {0.5, 0.0, 0.0};
    half.conv[0].mask = {1, 0, 0};
    half.precision = PrecisionKind::Pruned;
    CHECK(cost_report(half).multiplications == 10);
}

TEST_CASE("cycles are non-decreasing in quantization precision") {
    const EncoderModel model = EncoderModel::canonical(37);
    std::uint64_t prev = 0;
    for (int n : {4, 8, 16}) {
        const auto cycles = cost_report(quantize_model(model, n)).cpu_cycles();
        CHECK(cycles >= prev);
        prev = cycles;
    }
}

TEST_CASE("pruning reduces cycles monotonically in sparsity") {
    const EncoderModel model = EncoderModel::canonical(41);
    const auto baseline = cost_report(model);
    std::uint64_t prev = baseline.cpu_cycles() + 1;
    for (double s : {0.2, 0.4, 0.8}) {
        const auto [pruned, mask] = prune(model, s);
        const auto report = cost_report(pruned);
        CHECK(report.cpu_cycles() < prev);
        prev = report.cpu_cycles();
        // Multiplication count drops by at least the sparsity fraction.
        CHECK(static_cast<double>(report.multiplications) <=
              (1.0 - s + 0.01) * static_cast<double>(baseline.multiplications));
    }
}

TEST_CASE("cost csv row shape") {
    const CostReport report = cost_report(toy_line_model(0.5, 0.0));
    CHECK(cost_csv_header() == "model_tag,mult,inv,shift,add,cycles");
    CHECK(cost_csv_row(report) == "full,30,0,0,30,120");
}
