#include "paml/taskspace.hpp"

#include "fd_check.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace paml;
using task::TaskEmbedding;

TEST_CASE("sample_latent: zero noise returns the mean") {
    TaskEmbedding e = TaskEmbedding::prior_init(2);
    e.mean << 0.7, -1.1;
    const Vector h = task::sample_latent(e, Vector::Zero(2));
    CHECK(h.isApprox(e.mean.col(0)));
}

TEST_CASE("sample_latent: vanishing variance collapses to the mean") {
    TaskEmbedding e = TaskEmbedding::prior_init(2);
    e.mean << 0.3, 0.9;
    e.log_var.setConstant(std::log(1e-12));
    Rng rng(1);
    const Vector h = task::sample_latent(e, rng.normal_vector(2));
    CHECK((h - e.mean.col(0)).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("sample_latent: empirical mean of many draws matches") {
    TaskEmbedding e = TaskEmbedding::prior_init(2);
    e.mean << 1.5, -0.5;
    e.log_var << std::log(0.4), std::log(2.0);
    Rng rng(2);
    const int n = 100000;
    Vector acc = Vector::Zero(2);
    for (int i = 0; i < n; ++i) acc += task::sample_latent(e, rng.normal_vector(2));
    acc /= n;
    const Vector sigma = e.variances().array().sqrt();
    for (Index q = 0; q < 2; ++q)
        CHECK(std::abs(acc[q] - e.mean(q, 0)) < 3.0 * sigma[q] / std::sqrt(double(n)));
}

TEST_CASE("kl_latent: zero at the prior") {
    CHECK(task::kl_latent(TaskEmbedding::prior_init(3)) == doctest::Approx(0.0));
}

TEST_CASE("kl_latent: unit mean shift in one coordinate gives 0.5") {
    TaskEmbedding e = TaskEmbedding::prior_init(2);
    e.mean << 1.0, 0.0;
    CHECK(task::kl_latent(e) == doctest::Approx(0.5));
}

TEST_CASE("kl_latent: agrees with a Monte-Carlo estimate") {
    Rng rng(3);
    TaskEmbedding e = TaskEmbedding::prior_init(2);
    e.mean = rng.normal_matrix(2, 1);
    e.log_var = 0.5 * rng.normal_matrix(2, 1);
    const double closed = task::kl_latent(e);

    const int n = 1000000;
    Vector samples(n);
    for (int i = 0; i < n; ++i) {
        const Vector h = task::sample_latent(e, rng.normal_vector(2));
        const double log_q = task::log_density(e, h);
        const double log_p = -0.5 * (2.0 * std::log(2.0 * std::numbers::pi) + h.squaredNorm());
        samples[i] = log_q - log_p;
    }
    const double mc = samples.mean();
    const double se =
        std::sqrt((samples.array() - mc).square().sum() / (n - 1.0)) / std::sqrt(double(n));
    CHECK(std::abs(closed - mc) < 3.0 * se);
}

TEST_CASE("kl_latent gradient matches finite differences") {
    Rng rng(4);
    for (int rep = 0; rep < 5; ++rep) {
        TaskEmbedding e = TaskEmbedding::prior_init(3);
        e.mean = rng.normal_matrix(3, 1);
        e.log_var = 0.4 * rng.normal_matrix(3, 1);
        diff::Tape t;
        auto ev = task::bind_embedding(t, e, true);
        auto kl = task::kl_latent_graph(t, ev);
        CHECK(paml::testing::fd_check_leaf(t, kl, ev.mean).max_rel_error < 1e-4);
        CHECK(paml::testing::fd_check_leaf(t, kl, ev.log_var).max_rel_error < 1e-4);

        // closed form agrees with the graph value
        t.evaluate(kl);
        CHECK(t.value(kl)(0, 0) == doctest::Approx(task::kl_latent(e)).epsilon(1e-10));
    }
}

TEST_CASE("sample_latent graph is differentiable w.r.t. mean and log-variance") {
    Rng rng(5);
    TaskEmbedding e = TaskEmbedding::prior_init(2);
    e.mean = rng.normal_matrix(2, 1);
    e.log_var = 0.3 * rng.normal_matrix(2, 1);
    diff::Tape t;
    auto ev = task::bind_embedding(t, e, true);
    auto h = task::sample_latent_graph(t, ev, rng.normal_vector(2));
    auto out = t.sum(t.mul(h, h));
    CHECK(paml::testing::fd_check_leaf(t, out, ev.mean).max_rel_error < 1e-4);
    CHECK(paml::testing::fd_check_leaf(t, out, ev.log_var).max_rel_error < 1e-4);
}

namespace {

// Tiny trained-ish model over a 1-D input with Q=1.
gp::SvgpModel toy_model(std::uint64_t seed) {
    Rng rng(seed);
    gp::SvgpModel m = gp::SvgpModel::create(1, 1, 1, 8, rng);
    m.inducing.means = 0.7 * rng.normal_matrix(8, 1);
    m.likelihood.log_noise_variances.setConstant(std::log(0.05));
    return m;
}

}  // namespace

TEST_CASE("infer_embedding: zero steps returns the prior-initialized embedding") {
    auto model = toy_model(6);
    Rng rng(7);
    task::StandardizedData data{rng.normal_matrix(10, 1), rng.normal_matrix(10, 1)};
    diff::AdamConfig cfg;
    auto e = task::infer_embedding(model, data, 0, cfg, rng);
    CHECK(e.mean.isZero(0.0));
    CHECK(e.log_var.isZero(0.0));
}

TEST_CASE("infer_embedding: empty dataset is rejected") {
    auto model = toy_model(8);
    Rng rng(9);
    task::StandardizedData data{Matrix(0, 1), Matrix(0, 1)};
    diff::AdamConfig cfg;
    CHECK_THROWS_AS(task::infer_embedding(model, data, 10, cfg, rng), std::invalid_argument);
}

TEST_CASE("infer_embedding: global parameters are bit-identical before and after") {
    auto model = toy_model(10);
    Rng rng(11);
    task::StandardizedData data{rng.normal_matrix(12, 1), rng.normal_matrix(12, 1)};
    const auto before = checksum(model.parameters());
    diff::AdamConfig cfg;
    auto e = task::infer_embedding(model, data, 50, cfg, rng);
    const auto after = checksum(model.parameters());
    CHECK(before == after);
    CHECK(e.mean.cwiseAbs().maxCoeff() > 0.0);  // it did move
}

TEST_CASE("zero_shot_predictive: S = 1 with fixed seed equals the marginal at that sample") {
    auto model = toy_model(12);
    Rng rng_a(13);
    Rng rng_b(13);
    const Matrix X = Rng(14).normal_matrix(6, 1);
    const auto zs = task::zero_shot_predictive(model, X, 1, rng_a);

    const Vector h = rng_b.normal_vector(1);  // same stream, same draw
    Matrix x_aug(6, 2);
    x_aug.col(0) = X;
    x_aug.col(1).setConstant(h[0]);
    const auto direct = gp::svgp_marginal(model, x_aug);
    CHECK((zs.mean - direct.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((zs.var - direct.var).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero_shot_predictive: mixture variance dominates mean per-sample variance") {
    auto model = toy_model(15);
    Rng rng(16);
    const Matrix X = rng.normal_matrix(8, 1);
    const int S = 64;

    Rng rng_mix(17);
    const auto mix = task::zero_shot_predictive(model, X, S, rng_mix);

    Rng rng_same(17);
    const auto cache = gp::make_predictive_cache(model);
    Matrix var_acc = Matrix::Zero(8, 1);
    Matrix x_aug(8, 2);
    x_aug.col(0) = X;
    for (int s = 0; s < S; ++s) {
        const Vector h = rng_same.normal_vector(1);
        x_aug.col(1).setConstant(h[0]);
        var_acc += gp::svgp_marginal(model, cache, x_aug).var;
    }
    var_acc /= S;
    CHECK(((mix.var - var_acc).array() >= -1e-10).all());
}

TEST_CASE("infer_embedding: more shots never lose information on the same task") {
    // KL between few-shot and full-trajectory posteriors shrinks as the shot
    // count grows.
    auto model = toy_model(18);
    Rng data_rng(19);
    const Matrix X = data_rng.normal_matrix(100, 1);
    Matrix x_aug(100, 2);
    x_aug.col(0) = X;
    x_aug.col(1).setConstant(0.8);
    const auto marg = gp::svgp_marginal(model, x_aug);
    // targets generated at latent 0.8, with matching observation noise
    Matrix Y = marg.mean + 0.05 * data_rng.normal_matrix(100, 1);

    diff::AdamConfig cfg{.alpha = 0.05};
    Rng rng(21);
    auto full = task::infer_embedding(model, {X, Y}, 150, cfg, rng);

    auto gauss_kl = [](const task::TaskEmbedding& a, const task::TaskEmbedding& b) {
        const auto va = a.variances().array();
        const auto vb = b.variances().array();
        const auto d = (a.mean - b.mean).col(0).array();
        return 0.5 * ((va / vb) + d.square() / vb - 1.0 + (vb / va).log()).sum();
    };

    std::vector<int> shots{5, 10, 50, 100};
    std::vector<double> kls;
    for (int s : shots) {
        Rng r(21);  // same optimization stream as the full run
        auto e = task::infer_embedding(model, {X.topRows(s), Y.topRows(s)}, 150, cfg, r);
        kls.push_back(gauss_kl(e, full));
    }
    // 100 shots is the full trajectory under the same stream: KL collapses.
    CHECK(kls.back() < 1e-8);
    CHECK(kls.back() < kls.front());
    // monotone information: each step up in shots does not increase the KL
    for (std::size_t i = 0; i + 1 < kls.size(); ++i) CHECK(kls[i + 1] <= kls[i] * 1.05 + 1e-9);
}
