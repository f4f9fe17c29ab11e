#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sena;
using fixture::kind_of;

namespace {

double act(double v, Activation a) {
    switch (a) {
        case Activation::identity: return v;
        case Activation::leaky_relu: return v > 0 ? v : 0.01 * v;
        case Activation::tanh: return std::tanh(v);
    }
    return v;
}

Tensor dense_inverse(Tensor a) {
    const std::size_t d = a.rows();
    Tensor m = ops::sub(Tensor::identity(d), a);
    Tensor inv = Tensor::identity(d);
    for (std::size_t c = 0; c < d; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < d; ++r) {
            if (std::abs(m(r, c)) > std::abs(m(piv, c))) piv = r;
        }
        for (std::size_t k = 0; k < d; ++k) {
            std::swap(m(c, k), m(piv, k));
            std::swap(inv(c, k), inv(piv, k));
        }
        const double p = m(c, c);
        for (std::size_t k = 0; k < d; ++k) {
            m(c, k) /= p;
            inv(c, k) /= p;
        }
        for (std::size_t r = 0; r < d; ++r) {
            if (r == c) continue;
            const double f = m(r, c);
            for (std::size_t k = 0; k < d; ++k) {
                m(r, k) -= f * m(c, k);
                inv(r, k) -= f * inv(c, k);
            }
        }
    }
    return inv;
}

}

TEST(Model, ParameterShapes) {
    auto m = fixture::tiny_model();
    EXPECT_EQ(m.params.at("encoder.W").shape(), (std::vector<std::size_t>{8, 4}));
    EXPECT_EQ(m.params.at("encoder.delta_mu").shape(), (std::vector<std::size_t>{4, 3}));
    EXPECT_EQ(m.params.at("decoder.C2").shape(), (std::vector<std::size_t>{6, 8}));
    EXPECT_EQ(m.params.at("intervention.shift").shape(), (std::vector<std::size_t>{3, 1}));
    EXPECT_EQ(m.params.at("causal.A"), Tensor(3, 3));
    EXPECT_EQ(m.params.at("intervention.shift"), Tensor(3, 1));
}

TEST(Model, InitializationWithinFanInBound) {
    auto m = fixture::tiny_model();
    for (double v : m.params.at("encoder.W").values()) {
        EXPECT_LE(std::abs(v), 1.0 / std::sqrt(8.0));
    }
    EXPECT_EQ(fixture::tiny_model(), fixture::tiny_model());
    EXPECT_FALSE(fixture::tiny_model(EncoderVariant::sena_delta, 0.0, 3, 1) == fixture::tiny_model(EncoderVariant::sena_delta, 0.0, 3, 2));
}

TEST(Model, SenaVariantNeedsLatentDimEqualToSets) {
    ModelConfig c;
    c.variant = EncoderVariant::sena;
    c.latent_dim = 3;
    EXPECT_EQ(kind_of([&] { create_model(c, fixture::tiny_genes(), fixture::tiny_pathways(), {}, 1); }), ErrorKind::validation);
}

TEST(EncodeAlpha, AllOnesIdentitySumsGenes) {
    ModelConfig c;
    c.activation = Activation::identity;
    c.lambda = 1.0;
    c.latent_dim = 2;
    auto m = create_model(c, fixture::tiny_genes(), fixture::tiny_pathways(), {}, 1);
    m.params.at("encoder.W") = Tensor(8, 4, 1.0);
    Tensor x(1, 8);
    for (std::size_t i = 0; i < 8; ++i) x[i] = 0.5 * i - 1.0;
    const auto a = encode_alpha(m, x);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_DOUBLE_EQ(a(0, k), 0.5 * 28 - 8.0);
    }
}

TEST(EncodeAlpha, ExactMaskBlocksOutsideGenes) {
    auto m = fixture::tiny_model(EncoderVariant::sena_delta, 0.0);
    m.config.activation = Activation::identity;
    Tensor x(1, 8);
    x(0, 5) = 3.0;  // g6 lies only in BP3
    const auto a = encode_alpha(m, x);
    EXPECT_EQ(a(0, 0), 0.0);
    EXPECT_EQ(a(0, 1), 0.0);
    EXPECT_EQ(a(0, 3), 0.0);
    EXPECT_NE(a(0, 2), 0.0);
}

TEST(EncodeAlpha, MatchesDoubleLoop) {
    Rng rng(4);
    for (auto a : {Activation::identity, Activation::leaky_relu, Activation::tanh}) {
        auto m = fixture::tiny_model(EncoderVariant::sena_delta, 0.1);
        m.config.activation = a;
        const Tensor x = fixture::random_tensor(5, 8, rng);
        const auto got = encode_alpha(m, x);
        const auto& W = m.params.at("encoder.W");
        for (std::size_t c = 0; c < 5; ++c) {
            for (std::size_t k = 0; k < 4; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < 8; ++i) {
                    s += x(c, i) * W(i, k) * m.mask.values(i, k);
                }
                EXPECT_NEAR(got(c, k), act(s, a), 1e-14);
            }
        }
    }
}

TEST(EncodeAlpha, NonFiniteInputIsDomainError) {
    auto m = fixture::tiny_model();
    Tensor x(1, 8);
    x[2] = NAN;
    EXPECT_EQ(kind_of([&] { encode_alpha(m, x); }), ErrorKind::domain);
}

TEST(EncodeLatent, ZeroHeadsGiveStandardNormal) {
    auto m = fixture::tiny_model();
    m.params.at("encoder.delta_mu") = Tensor(4, 3);
    m.params.at("encoder.delta_logvar") = Tensor(4, 3);
    Rng rng(1);
    const auto s = encode_latent(m, Tensor(1, 4, 0.7), rng);
    EXPECT_EQ(s.mu, Tensor(1, 3));
    EXPECT_EQ(s.logvar, Tensor(1, 3));
    Rng again(1);
    EXPECT_EQ(s.z, draw_normal(1, 3, again));
}

TEST(EncodeLatent, DeterministicForSeed) {
    auto m = fixture::tiny_model();
    Rng a(9), b(9);
    EXPECT_EQ(encode_latent(m, Tensor(2, 4, 0.3), a).z, encode_latent(m, Tensor(2, 4, 0.3), b).z);
}

TEST(EncodeLatent, SampleVarianceMatchesExpLogvar) {
    auto m = fixture::tiny_model();
    const Tensor alpha(1, 4, 0.8);
    Rng rng(2);
    const std::size_t draws = 100000;
    const Tensor many = ops::broadcast_row(alpha, draws);
    const auto s = encode_latent(m, many, rng);
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t r = 0; r < draws; ++r) mean += s.z(r, j);
        mean /= draws;
        for (std::size_t r = 0; r < draws; ++r) sq += (s.z(r, j) - mean) * (s.z(r, j) - mean);
        const double var = sq / (draws - 1);
        EXPECT_NEAR(var / std::exp(s.logvar(0, j)), 1.0, 0.05);
    }
}

TEST(Neumann, ZeroAdjacencyIsIdentity) { EXPECT_EQ(neumann_L(Tensor(4, 4), 3), Tensor::identity(4)); }

TEST(Neumann, TwoByTwo) {
    auto a = Tensor::from_rows({{0, 0.7}, {0, 0}});
    EXPECT_EQ(neumann_L(a, 1), Tensor::from_rows({{1, 0.7}, {0, 1}}));
}

TEST(Neumann, MatchesLinearSolve) {
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const auto a = fixture::random_upper(8, rng);
        const auto L = neumann_L(a, 7);
        const auto inv = dense_inverse(a);
        for (std::size_t k = 0; k < L.size(); ++k) {
            EXPECT_NEAR(L[k], inv[k], 1e-10);
        }
    }
}

TEST(Neumann, NilpotentPower) {
    Rng rng(12);
    const auto a = fixture::random_upper(6, rng);
    Tensor p = Tensor::identity(6);
    for (int i = 0; i < 6; ++i) p = ops::matmul(p, a);
    EXPECT_EQ(p, Tensor(6, 6));
}

TEST(Neumann, LowerEntryIsStructureError) {
    auto a = Tensor(3, 3);
    a(2, 0) = 0.1;
    EXPECT_EQ(kind_of([&] { neumann_L(a, 2); }), ErrorKind::contract);
    auto diag = Tensor(3, 3);
    diag(1, 1) = 1.0;
    EXPECT_THROW(neumann_L(diag, 2), Error);
    EXPECT_THROW(neumann_L(Tensor(3, 3), 1), Error);
}

TEST(CausalFactors, IdentityAndFirstRow) {
    Rng rng(3);
    const auto z = fixture::random_tensor(2, 4, rng);
    EXPECT_EQ(to_causal_factors(z, Tensor::identity(4)), z);
    const auto L = neumann_L(fixture::random_upper(4, rng), 3);
    Tensor e1(1, 4);
    e1[0] = 1.0;
    const auto u = to_causal_factors(e1, L);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(u(0, j), L(0, j));
}

TEST(CausalFactors, MatchesLoopAndIsLinear) {
    Rng rng(30);
    const auto L = neumann_L(fixture::random_upper(5, rng), 4);
    const auto z1 = fixture::random_tensor(1, 5, rng);
    const auto z2 = fixture::random_tensor(1, 5, rng);
    const auto u = to_causal_factors(z1, L);
    for (std::size_t j = 0; j < 5; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < 5; ++i) s += z1(0, i) * L(i, j);
        EXPECT_NEAR(u(0, j), s, 1e-14);
    }
    const auto lhs = to_causal_factors(ops::add(z1, z2), L);
    const auto rhs = ops::add(u, to_causal_factors(z2, L));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(lhs[j], rhs[j], 1e-12);
}

TEST(InterventionTarget, ZeroWeightsGiveUniform) {
    auto m = fixture::tiny_model();
    m.params.at("intervention.W2") = Tensor(5, 3);
    const auto t = intervention_target(m, 1);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(t[j], 1.0 / 3.0, 1e-15);
}

TEST(InterventionTarget, DominantLogitAtHighTemperature) {
    auto m = fixture::tiny_model();
    m.params.at("intervention.W2") = Tensor(5, 3);
    m.params.at("intervention.b2") = Tensor::row({0.5, 0.0, 0.0});
    EXPECT_GT(intervention_target(m, 0)[0], 1.0 - 1e-6);
}

TEST(InterventionTarget, ClosedFormAtUnitTemperature) {
    ModelConfig c;
    c.latent_dim = 2;
    c.temperature = 1.0;
    auto m = create_model(c, fixture::tiny_genes(), fixture::tiny_pathways(), {"g1"}, 1);
    m.params.at("intervention.W2") = Tensor(c.hidden_dim, 2);
    m.params.at("intervention.b2") = Tensor::row({1.0, 0.0});
    const auto t = intervention_target(m, 0);
    const double e = std::exp(1.0);
    EXPECT_NEAR(t[0], e / (e + 1), 1e-15);
    EXPECT_NEAR(t[1], 1 / (e + 1), 1e-15);
}

TEST(InterventionTarget, SimplexAndArgmaxStableAcrossTemperatures) {
    Rng rng(6);
    auto m = fixture::tiny_model();
    fixture::randomize(m, rng, 1.0);
    for (std::size_t p = 0; p < 3; ++p) {
        std::size_t argmax = 0;
        for (double temp : {0.5, 1.0, 10.0, 100.0}) {
            m.config.temperature = temp;
            const auto t = intervention_target(m, p);
            double s = 0.0;
            for (double v : t.values()) {
                EXPECT_GE(v, 0.0);
                s += v;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
            const auto am = static_cast<std::size_t>(std::max_element(t.values().begin(), t.values().end()) - t.values().begin());
            if (temp == 0.5) argmax = am;
            EXPECT_EQ(am, argmax);
        }
    }
    EXPECT_EQ(kind_of([&] { intervention_target(m, 3); }), ErrorKind::lookup);
}

TEST(ApplyIntervention, ControlAndZeroShift) {
    Rng rng(2);
    auto m = fixture::tiny_model();
    const auto z = fixture::random_tensor(2, 3, rng);
    EXPECT_EQ(apply_intervention(m, z, {PerturbationLabel{}, PerturbationLabel{}}), z);
    EXPECT_EQ(apply_intervention(m, z, {PerturbationLabel::parse("g1"), PerturbationLabel::parse("g4+g7")}), z);
}

TEST(ApplyIntervention, DoubleEqualsSequentialSingles) {
    Rng rng(2);
    auto m = fixture::tiny_model();
    fixture::randomize(m, rng, 1.0);
    const auto z = fixture::random_tensor(1, 3, rng);
    const auto both = apply_intervention(m, z, {PerturbationLabel::parse("g1+g4")});
    const auto seq = apply_intervention(m, apply_intervention(m, z, {PerturbationLabel::parse("g1")}), {PerturbationLabel::parse("g4")});
    EXPECT_EQ(both, seq);
    const double s1 = m.params.at("intervention.shift")(0, 0), s2 = m.params.at("intervention.shift")(1, 0);
    const auto h1 = intervention_target(m, 0), h2 = intervention_target(m, 1);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(both[j], z[j] + s1 * h1[j] + s2 * h2[j], 1e-14);
    }
}

TEST(ApplyIntervention, UnknownTargetIsLookupError) {
    auto m = fixture::tiny_model();
    EXPECT_EQ(kind_of([&] { apply_intervention(m, Tensor(1, 3), {PerturbationLabel::parse("g2")}); }), ErrorKind::lookup);
    EXPECT_EQ(kind_of([&] { apply_intervention(m, Tensor(1, 3), {PerturbationLabel{}}, 0.0); }), ErrorKind::domain);
}

TEST(DecodePoly, ZeroLatentGivesIntercept) {
    Rng rng(1);
    auto m = fixture::tiny_model();
    fixture::randomize(m, rng);
    const auto x = decode_poly(m, Tensor(1, 3));
    EXPECT_EQ(x, m.params.at("decoder.C0"));
}

TEST(DecodePoly, ScalarPolynomial) {
    ModelConfig c;
    c.latent_dim = 1;
    auto m = create_model(c, fixture::tiny_genes(), fixture::tiny_pathways(), {}, 3);
    Rng rng(2);
    fixture::randomize(m, rng);
    const double u = 0.7;
    const auto x = decode_poly(m, Tensor::scalar(u));
    for (std::size_t i = 0; i < 8; ++i) {
        const double want = m.params.at("decoder.C0")(0, i) + m.params.at("decoder.C1")(0, i) * u + m.params.at("decoder.C2")(0, i) * u * u;
        EXPECT_NEAR(x(0, i), want, 1e-15);
    }
}

TEST(DecodePoly, MatchesMonomialExpansion) {
    Rng rng(5);
    auto m = fixture::tiny_model();
    fixture::randomize(m, rng);
    const auto u = fixture::random_tensor(3, 3, rng);
    const auto x = decode_poly(m, u);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 8; ++i) {
            double want = m.params.at("decoder.C0")(0, i);
            for (std::size_t a = 0; a < 3; ++a) want += u(c, a) * m.params.at("decoder.C1")(a, i);
            std::size_t col = 0;
            for (std::size_t a = 0; a < 3; ++a) {
                for (std::size_t b = a; b < 3; ++b) {
                    want += u(c, a) * u(c, b) * m.params.at("decoder.C2")(col++, i);
                }
            }
            EXPECT_NEAR(x(c, i), want, 1e-13);
        }
    }
}

TEST(Forward, ZeroDecoderGivesIntercept) {
    Rng rng(1);
    auto m = fixture::tiny_model();
    fixture::randomize(m, rng);
    m.params.at("decoder.C1") = Tensor(3, 8);
    m.params.at("decoder.C2") = Tensor(6, 8);
    const auto f = forward(m, fixture::random_tensor(1, 8, rng), {PerturbationLabel{}}, rng);
    EXPECT_EQ(f.x_hat, m.params.at("decoder.C0"));
}

TEST(Forward, DeterministicAndEqualToManualChain) {
    Rng rng(3);
    auto m = fixture::tiny_model();
    fixture::randomize(m, rng);
    const auto x = fixture::random_tensor(4, 8, rng);
    const std::vector<PerturbationLabel> labels{PerturbationLabel{}, PerturbationLabel::parse("g1"), PerturbationLabel::parse("g4+g7"), {}};
    Rng r1(77), r2(77), r3(77);
    const auto f = forward(m, x, labels, r1);
    EXPECT_EQ(f.x_hat, forward(m, x, labels, r2).x_hat);

    const auto alpha = encode_alpha(m, x);
    const auto lat = encode_latent(m, alpha, r3);
    const auto z = apply_intervention(m, lat.z, labels);
    const auto u = to_causal_factors(z, model_L(m));
    const auto xh = decode_poly(m, u);
    EXPECT_EQ(f.alpha, alpha);
    EXPECT_EQ(f.mu, lat.mu);
    EXPECT_EQ(f.z, lat.z);
    EXPECT_EQ(f.u, u);
    EXPECT_EQ(f.x_hat, xh);
}

TEST(Forward, EveryVariantRuns) {
    Rng rng(4);
    for (auto v : {EncoderVariant::sena, EncoderVariant::sena_delta, EncoderVariant::mlp, EncoderVariant::mlp_l1}) {
        auto m = fixture::tiny_model(v);
        const auto f = forward(m, fixture::random_tensor(2, 8, rng), {PerturbationLabel{}, PerturbationLabel{}}, rng);
        EXPECT_TRUE(f.x_hat.all_finite());
        EXPECT_EQ(f.mu.cols(), m.latent_dim());
    }
    auto sena = fixture::tiny_model(EncoderVariant::sena);
    const auto x = fixture::random_tensor(1, 8, rng);
    const auto f = forward(sena, x, {PerturbationLabel{}}, rng);
    EXPECT_EQ(f.mu, f.alpha);
}

TEST(Gradients, ExactMaskZeroGradient) {
    Rng rng(10);
    auto m = fixture::tiny_model(EncoderVariant::sena_delta, 0.0);
    Tape tape;
    TapeBackend be{tape};
    auto p = tape_values(tape, m);
    auto x = tape.parameter(fixture::random_tensor(1, 8, rng), "x");
    auto a = graph::alpha(be, m, p, x);
    for (std::size_t k = 0; k < 4; ++k) {
        Tensor pick(4, 1);
        pick[k] = 1.0;
        auto ak = tape.sum(tape.matmul(a, tape.constant(pick)));
        const auto g = tape.gradient(ak).at(x.id);
        for (std::size_t i = 0; i < 8; ++i) {
            if (!m.membership[i][k]) {
                EXPECT_EQ(g[i], 0.0);
            }
        }
    }
}
