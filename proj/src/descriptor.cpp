#include "paml/descriptor.hpp"

#include <cmath>
#include <numbers>

namespace paml::desc {

namespace {

constexpr double kLeakySlope = 0.1;

// He-style scaling keeps early activations O(1).
Matrix glorot(Index rows, Index cols, Rng& rng) {
    return rng.normal_matrix(rows, cols) * std::sqrt(2.0 / static_cast<double>(rows + cols));
}

double gaussian_loglik(const Matrix& x, const Matrix& mean, const Eigen::RowVectorXd& log_var) {
    const auto var = log_var.array().exp();
    double ll = 0.0;
    const double c = std::log(2.0 * std::numbers::pi);
    for (Index j = 0; j < x.cols(); ++j) {
        const auto r = (x.col(j) - mean.col(j)).array();
        ll += -0.5 * (static_cast<double>(x.rows()) * (c + log_var(j)) +
                      (r.square() / var(j)).sum());
    }
    return ll;
}

}  // namespace

DescriptorDecoder DescriptorDecoder::create(Index latent_dim, Index out_dim, Index hidden,
                                            Rng& rng) {
    DescriptorDecoder d;
    d.w1 = glorot(latent_dim, hidden, rng);
    d.b1 = Matrix::Zero(1, hidden);
    // Zero head: the decoder starts affine through the skip and grows the
    // tanh path only where the data bends. A bounded far field would defeat
    // the candidate bounds filter, so the linear path must stay dominant.
    d.w2 = Matrix::Zero(hidden, out_dim);
    d.b2 = Matrix::Zero(1, out_dim);
    d.w_skip = glorot(latent_dim, out_dim, rng);
    d.log_noise = Matrix::Zero(1, out_dim);
    return d;
}

Matrix DescriptorDecoder::decode(const Matrix& latents) const {
    if (latents.cols() != latent_dim())
        throw std::invalid_argument("descriptor decoder: latent dimension mismatch");
    const Matrix a1 = ((latents * w1).rowwise() + b1.row(0)).array().tanh();
    return ((a1 * w2 + latents * w_skip).rowwise() + b2.row(0)).eval();
}

std::vector<Matrix*> DescriptorDecoder::parameters() {
    return {&w1, &b1, &w2, &b2, &w_skip, &log_noise};
}

double descriptor_loglik(const DescriptorDecoder& dec, const Vector& psi, const Vector& h) {
    if (psi.size() != dec.out_dim())
        throw std::invalid_argument("descriptor_loglik: descriptor dimension mismatch");
    const Matrix mean = dec.decode(h.transpose());
    return gaussian_loglik(psi.transpose(), mean, dec.log_noise.row(0));
}

DecoderVars bind_decoder(diff::Tape& tape, const DescriptorDecoder& dec, bool trainable) {
    auto leaf = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
    DecoderVars dv;
    dv.w1 = leaf(dec.w1);
    dv.b1 = leaf(dec.b1);
    dv.w2 = leaf(dec.w2);
    dv.b2 = leaf(dec.b2);
    dv.w_skip = leaf(dec.w_skip);
    dv.log_noise = leaf(dec.log_noise);
    return dv;
}

diff::Var decode_graph(diff::Tape& tape, const DecoderVars& dv, diff::Var latents) {
    diff::Var a1 = tape.tanh(tape.add(tape.matmul(latents, dv.w1), dv.b1));
    diff::Var mlp = tape.add(tape.matmul(a1, dv.w2), tape.matmul(latents, dv.w_skip));
    return tape.add(mlp, dv.b2);
}

namespace {

// sum_{rows,dims} log N(x | mean, exp(log_noise_row)), as a graph.
diff::Var gaussian_loglik_graph(diff::Tape& tape, diff::Var x, diff::Var mean,
                                diff::Var log_noise_row) {
    diff::Var resid = tape.sub(x, mean);
    diff::Var quad = tape.div(tape.mul(resid, resid), tape.exp(log_noise_row));
    diff::Var log_term = tape.add(log_noise_row, tape.scalar(std::log(2.0 * std::numbers::pi)));
    return tape.mul(tape.sum(tape.add(quad, log_term)), tape.scalar(-0.5));
}

}  // namespace

diff::Var descriptor_loglik_graph(diff::Tape& tape, const DecoderVars& dv, diff::Var latents,
                                  diff::Var descriptors) {
    return gaussian_loglik_graph(tape, descriptors, decode_graph(tape, dv, latents), dv.log_noise);
}

PixelVae PixelVae::create(Index image_dim, Index latent_dim, Index hidden, Rng& rng) {
    PixelVae v;
    v.enc_w1 = glorot(image_dim, hidden, rng);
    v.enc_b1 = Matrix::Zero(1, hidden);
    v.enc_w2 = glorot(hidden, hidden, rng);
    v.enc_b2 = Matrix::Zero(1, hidden);
    // Zero-initialized heads: untrained encoder emits the prior exactly.
    v.enc_wm = Matrix::Zero(hidden, latent_dim);
    v.enc_bm = Matrix::Zero(1, latent_dim);
    v.enc_wv = Matrix::Zero(hidden, latent_dim);
    v.enc_bv = Matrix::Zero(1, latent_dim);
    v.dec_w1 = glorot(latent_dim, hidden, rng);
    v.dec_b1 = Matrix::Zero(1, hidden);
    v.dec_w2 = glorot(hidden, hidden, rng);
    v.dec_b2 = Matrix::Zero(1, hidden);
    v.dec_wo = glorot(hidden, image_dim, rng);
    v.dec_bo = Matrix::Zero(1, image_dim);
    v.log_pixel_noise = Matrix::Constant(1, 1, std::log(1e-2));
    return v;
}

namespace {
Matrix leaky(const Matrix& x) {
    return (x.array() > 0.0).select(x.array(), kLeakySlope * x.array());
}
}  // namespace

std::pair<Matrix, Matrix> PixelVae::encode(const Matrix& images) const {
    if (images.cols() != image_dim())
        throw std::invalid_argument("pixel vae: image shape mismatch");
    const Matrix h1 = leaky((images * enc_w1).rowwise() + enc_b1.row(0));
    const Matrix h2 = leaky((h1 * enc_w2).rowwise() + enc_b2.row(0));
    Matrix means = (h2 * enc_wm).rowwise() + enc_bm.row(0);
    Matrix vars = ((h2 * enc_wv).rowwise() + enc_bv.row(0)).array().exp();
    return {std::move(means), std::move(vars)};
}

task::TaskEmbedding PixelVae::encode_image(const Vector& image) const {
    auto [means, vars] = encode(image.transpose());
    task::TaskEmbedding e;
    e.mean = means.row(0).transpose();
    e.log_var = vars.row(0).transpose().array().log();
    return e;
}

Matrix PixelVae::decode(const Matrix& latents) const {
    const Matrix h1 = leaky((latents * dec_w1).rowwise() + dec_b1.row(0));
    const Matrix h2 = leaky((h1 * dec_w2).rowwise() + dec_b2.row(0));
    const Matrix logits = (h2 * dec_wo).rowwise() + dec_bo.row(0);
    return 1.0 / (1.0 + (-logits.array()).exp());
}

std::vector<Matrix*> PixelVae::parameters() {
    return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &enc_wm, &enc_bm, &enc_wv, &enc_bv,
            &dec_w1, &dec_b1, &dec_w2, &dec_b2, &dec_wo, &dec_bo, &log_pixel_noise};
}

VaeVars bind_vae(diff::Tape& tape, const PixelVae& vae, bool trainable) {
    auto leaf = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
    VaeVars vv;
    vv.enc_w1 = leaf(vae.enc_w1);
    vv.enc_b1 = leaf(vae.enc_b1);
    vv.enc_w2 = leaf(vae.enc_w2);
    vv.enc_b2 = leaf(vae.enc_b2);
    vv.enc_wm = leaf(vae.enc_wm);
    vv.enc_bm = leaf(vae.enc_bm);
    vv.enc_wv = leaf(vae.enc_wv);
    vv.enc_bv = leaf(vae.enc_bv);
    vv.dec_w1 = leaf(vae.dec_w1);
    vv.dec_b1 = leaf(vae.dec_b1);
    vv.dec_w2 = leaf(vae.dec_w2);
    vv.dec_b2 = leaf(vae.dec_b2);
    vv.dec_wo = leaf(vae.dec_wo);
    vv.dec_bo = leaf(vae.dec_bo);
    vv.log_pixel_noise = leaf(vae.log_pixel_noise);
    return vv;
}

std::pair<diff::Var, diff::Var> encode_graph(diff::Tape& tape, const VaeVars& vv,
                                             diff::Var images) {
    diff::Var h1 = tape.leaky_relu(tape.add(tape.matmul(images, vv.enc_w1), vv.enc_b1), kLeakySlope);
    diff::Var h2 = tape.leaky_relu(tape.add(tape.matmul(h1, vv.enc_w2), vv.enc_b2), kLeakySlope);
    diff::Var mean = tape.add(tape.matmul(h2, vv.enc_wm), vv.enc_bm);
    diff::Var log_var = tape.add(tape.matmul(h2, vv.enc_wv), vv.enc_bv);
    return {mean, log_var};
}

diff::Var decode_graph(diff::Tape& tape, const VaeVars& vv, diff::Var latents) {
    diff::Var h1 = tape.leaky_relu(tape.add(tape.matmul(latents, vv.dec_w1), vv.dec_b1), kLeakySlope);
    diff::Var h2 = tape.leaky_relu(tape.add(tape.matmul(h1, vv.dec_w2), vv.dec_b2), kLeakySlope);
    return tape.sigmoid(tape.add(tape.matmul(h2, vv.dec_wo), vv.dec_bo));
}

diff::Var pixel_loglik_graph(diff::Tape& tape, const VaeVars& vv, diff::Var latents,
                             diff::Var images) {
    return gaussian_loglik_graph(tape, images, decode_graph(tape, vv, latents),
                                 vv.log_pixel_noise);
}

diff::Var vae_objective_graph(diff::Tape& tape, const VaeVars& vv, const Matrix& train_images,
                              const Matrix& candidate_images, const Matrix& noise) {
    if (candidate_images.rows() == 0)
        throw std::invalid_argument("vae_objective: candidate set must be nonempty");
    diff::Var obj = tape.scalar(0.0);
    if (train_images.rows() > 0) {
        if (noise.rows() != train_images.rows())
            throw std::invalid_argument("vae_objective: one noise row per training image");
        diff::Var imgs = tape.constant(train_images);
        auto [mean, log_var] = encode_graph(tape, vv, imgs);
        diff::Var h = tape.add(mean, tape.mul(tape.exp(tape.mul(log_var, tape.scalar(0.5))),
                                              tape.constant(noise)));
        diff::Var recon = pixel_loglik_graph(tape, vv, h, imgs);
        // KL to the standard-normal prior, summed over images.
        diff::Var var = tape.exp(log_var);
        diff::Var kl_inner =
            tape.sub(tape.sub(tape.add(var, tape.mul(mean, mean)), log_var), tape.scalar(1.0));
        diff::Var kl = tape.mul(tape.sum(kl_inner), tape.scalar(0.5));
        obj = tape.add(obj, tape.sub(recon, kl));
    }
    diff::Var cand = tape.constant(candidate_images);
    auto [cand_mean, cand_log_var] = encode_graph(tape, vv, cand);
    (void)cand_log_var;  // candidate term uses encoder means only
    obj = tape.add(obj, pixel_loglik_graph(tape, vv, cand_mean, cand));
    return obj;
}

double vae_objective(const PixelVae& vae, const Matrix& train_images,
                     const Matrix& candidate_images, const Matrix& noise) {
    diff::Tape tape;
    VaeVars vv = bind_vae(tape, vae, /*trainable=*/false);
    diff::Var obj = vae_objective_graph(tape, vv, train_images, candidate_images, noise);
    return tape.evaluate(obj);
}

}  // namespace paml::desc
