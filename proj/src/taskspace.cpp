#include "paml/taskspace.hpp"

#include <cmath>
#include <numbers>

namespace paml::task {

TaskEmbedding TaskEmbedding::prior_init(Index q) {
    TaskEmbedding e;
    e.mean = Matrix::Zero(q, 1);
    e.log_var = Matrix::Zero(q, 1);
    return e;
}

Vector sample_latent(const TaskEmbedding& e, const Vector& noise) {
    if (noise.size() != e.dim())
        throw std::invalid_argument("sample_latent: noise dimension mismatch");
    return e.mean.col(0).array() + (0.5 * e.log_var.col(0).array()).exp() * noise.array();
}

double kl_latent(const TaskEmbedding& e) {
    const auto var = e.log_var.col(0).array().exp();
    const auto mean2 = e.mean.col(0).array().square();
    return 0.5 * (var + mean2 - 1.0 - e.log_var.col(0).array()).sum();
}

double log_density(const TaskEmbedding& e, const Vector& h) {
    if (h.size() != e.dim()) throw std::invalid_argument("log_density: dimension mismatch");
    const auto var = e.log_var.col(0).array().exp();
    const auto d = (h - e.mean.col(0)).array();
    return -0.5 * (static_cast<double>(e.dim()) * std::log(2.0 * std::numbers::pi) +
                   e.log_var.sum() + (d.square() / var).sum());
}

EmbeddingVars bind_embedding(diff::Tape& tape, const TaskEmbedding& e, bool trainable) {
    EmbeddingVars ev;
    if (trainable) {
        ev.mean = tape.parameter(e.mean);
        ev.log_var = tape.parameter(e.log_var);
    } else {
        ev.mean = tape.constant(e.mean);
        ev.log_var = tape.constant(e.log_var);
    }
    return ev;
}

diff::Var sample_latent_graph(diff::Tape& tape, const EmbeddingVars& ev, const Vector& noise) {
    diff::Var eps = tape.constant(noise);
    diff::Var std_dev = tape.exp(tape.mul(ev.log_var, tape.scalar(0.5)));
    return tape.add(ev.mean, tape.mul(std_dev, eps));
}

diff::Var kl_latent_graph(diff::Tape& tape, const EmbeddingVars& ev) {
    diff::Var var = tape.exp(ev.log_var);
    diff::Var mean2 = tape.mul(ev.mean, ev.mean);
    diff::Var inner = tape.sub(tape.sub(tape.add(var, mean2), ev.log_var),
                               tape.constant(Matrix::Ones(tape.value(ev.mean).rows(), 1)));
    return tape.mul(tape.sum(inner), tape.scalar(0.5));
}

diff::Var expected_loglik_graph(diff::Tape& tape, const gp::MarginalVars& mv, diff::Var targets,
                                diff::Var log_noise_row) {
    diff::Var noise = tape.exp(log_noise_row);  // 1 x D
    diff::Var resid = tape.sub(targets, mv.mean);
    diff::Var quad = tape.div(tape.add(tape.mul(resid, resid), mv.var), noise);
    diff::Var log_term = tape.add(log_noise_row, tape.scalar(std::log(2.0 * std::numbers::pi)));
    // sum_{n,d} -0.5 * (log 2pi + log noise_d + ((y-m)^2 + v)/noise_d)
    diff::Var per_point = tape.add(quad, log_term);
    return tape.mul(tape.sum(per_point), tape.scalar(-0.5));
}

namespace {

struct InferenceGraph {
    diff::Tape tape;
    std::vector<EmbeddingVars> embeddings;
    std::vector<diff::Var> noise_leaves;
    diff::Var loss;
};

// Restricted objective: sum over tasks of expected dynamics log-likelihood
// minus latent KL, all global parameters bound as constants.
InferenceGraph build_inference_graph(const gp::SvgpModel& model,
                                     const std::vector<StandardizedData>& data,
                                     const std::vector<TaskEmbedding>& init) {
    InferenceGraph g;
    auto& tape = g.tape;
    gp::SvgpGraph svgp = gp::build_svgp_graph(tape, model, /*trainable=*/false);
    diff::Var log_noise = svgp.vars.log_noise;

    std::vector<diff::Var> blocks;
    std::vector<diff::Var> target_blocks;
    diff::Var obj = tape.scalar(0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Matrix& X = data[i].inputs;
        EmbeddingVars ev = bind_embedding(tape, init[i], /*trainable=*/true);
        g.embeddings.push_back(ev);
        diff::Var x_aug;
        if (model.latent_dim > 0) {
            diff::Var eps = tape.constant(Matrix::Zero(model.latent_dim, 1));
            g.noise_leaves.push_back(eps);
            diff::Var std_dev = tape.exp(tape.mul(ev.log_var, tape.scalar(0.5)));
            diff::Var h = tape.add(ev.mean, tape.mul(std_dev, eps));
            diff::Var tile = tape.matmul(tape.constant(Matrix::Ones(X.rows(), 1)),
                                         tape.transpose(h));
            x_aug = tape.hcat(tape.constant(X), tile);
        } else {
            x_aug = tape.constant(X);
        }
        blocks.push_back(x_aug);
        target_blocks.push_back(tape.constant(data[i].targets));
        obj = tape.sub(obj, kl_latent_graph(tape, ev));
    }
    diff::Var x_all = blocks.size() == 1 ? blocks[0] : tape.vcat(blocks);
    diff::Var y_all = target_blocks.size() == 1 ? target_blocks[0] : tape.vcat(target_blocks);
    gp::MarginalVars mv = gp::svgp_marginal_graph(tape, svgp, x_all);
    obj = tape.add(obj, expected_loglik_graph(tape, mv, y_all, log_noise));
    g.loss = tape.neg(obj);
    return g;
}

}  // namespace

std::vector<TaskEmbedding> infer_embeddings(const gp::SvgpModel& model,
                                            const std::vector<StandardizedData>& data, int steps,
                                            const diff::AdamConfig& adam_cfg, Rng& rng) {
    if (data.empty()) throw std::invalid_argument("infer_embeddings: no tasks");
    for (const auto& d : data)
        if (d.inputs.rows() == 0)
            throw std::invalid_argument("infer_embeddings: empty dataset, use the zero-shot path");

    std::vector<TaskEmbedding> result;
    result.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        result.push_back(TaskEmbedding::prior_init(model.latent_dim));
    if (steps <= 0 || model.latent_dim == 0) return result;

    InferenceGraph g = build_inference_graph(model, data, result);
    diff::Adam adam(adam_cfg);
    std::vector<Matrix*> params;
    std::vector<diff::Var> leaves;
    for (std::size_t i = 0; i < result.size(); ++i) {
        params.push_back(&result[i].mean);
        params.push_back(&result[i].log_var);
        leaves.push_back(g.embeddings[i].mean);
        leaves.push_back(g.embeddings[i].log_var);
    }
    for (int s = 0; s < steps; ++s) {
        for (std::size_t i = 0; i < data.size(); ++i)
            g.tape.set_value(g.noise_leaves[i], rng.normal_matrix(model.latent_dim, 1));
        g.tape.evaluate(g.loss);
        g.tape.backward(g.loss);
        std::vector<Matrix> grads;
        grads.reserve(leaves.size());
        for (diff::Var v : leaves) grads.push_back(g.tape.gradient(v));
        adam.step(params, grads);
        for (std::size_t i = 0; i < params.size(); ++i) g.tape.set_value(leaves[i], *params[i]);
    }
    return result;
}

TaskEmbedding infer_embedding(const gp::SvgpModel& model, const StandardizedData& data, int steps,
                              const diff::AdamConfig& adam_cfg, Rng& rng) {
    if (data.inputs.rows() == 0)
        throw std::invalid_argument("infer_embedding: empty dataset, use the zero-shot path");
    return infer_embeddings(model, {data}, steps, adam_cfg, rng)[0];
}

gp::MarginalResult predictive_mixture(const gp::SvgpModel& model, const gp::PredictiveCache& cache,
                                      const Matrix& inputs, const Vector& latent_mean,
                                      const Vector& latent_var, int samples, Rng& rng) {
    if (samples < 1) throw std::invalid_argument("predictive_mixture: need at least one sample");
    const Index n = inputs.rows();
    const Index d_out = model.output_dim;
    Matrix mean_acc = Matrix::Zero(n, d_out);
    Matrix raw2_acc = Matrix::Zero(n, d_out);  // E[var + mean^2]
    Matrix x_aug(n, model.augmented_dim());
    x_aug.leftCols(model.input_dim) = inputs;
    const Vector latent_std = latent_var.array().sqrt();
    for (int s = 0; s < samples; ++s) {
        const Vector h =
            latent_mean.array() + latent_std.array() * rng.normal_vector(model.latent_dim).array();
        x_aug.rightCols(model.latent_dim) = h.transpose().replicate(n, 1);
        const auto m = gp::svgp_marginal(model, cache, x_aug);
        mean_acc += m.mean;
        raw2_acc += m.var + m.mean.cwiseProduct(m.mean);
    }
    gp::MarginalResult out;
    out.mean = mean_acc / samples;
    // Law of total variance: E[var] + E[mean^2] - (E[mean])^2.
    out.var = (raw2_acc / samples - out.mean.cwiseProduct(out.mean)).cwiseMax(1e-8);
    return out;
}

gp::MarginalResult zero_shot_predictive(const gp::SvgpModel& model, const Matrix& inputs,
                                        int samples, Rng& rng) {
    const gp::PredictiveCache cache = make_predictive_cache(model);
    return predictive_mixture(model, cache, inputs, Vector::Zero(model.latent_dim),
                              Vector::Ones(model.latent_dim), samples, rng);
}

}  // namespace paml::task
