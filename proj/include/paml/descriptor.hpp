#pragma once

#include "paml/taskspace.hpp"

namespace paml::desc {

/// One-hidden-layer tanh MLP with a linear skip path from latent codes to
/// descriptor means, plus a learned homoscedastic diagonal Gaussian
/// observation noise. The skip keeps the far-field behavior unbounded, so
/// latents far outside the training region decode outside any finite
/// descriptor box and candidate filtering can reject them.
struct DescriptorDecoder {
    Matrix w1, b1;      // Q x H, 1 x H
    Matrix w2, b2;      // H x P, 1 x P
    Matrix w_skip;      // Q x P
    Matrix log_noise;   // 1 x P

    static DescriptorDecoder create(Index latent_dim, Index out_dim, Index hidden, Rng& rng);

    Index latent_dim() const { return w1.rows(); }
    Index out_dim() const { return w2.cols(); }

    /// Rows of latents -> rows of descriptor means.
    Matrix decode(const Matrix& latents) const;

    std::vector<Matrix*> parameters();
};

/// Gaussian log-density of a (standardized) descriptor under the decoder.
double descriptor_loglik(const DescriptorDecoder& dec, const Vector& psi, const Vector& h);

struct DecoderVars {
    diff::Var w1, b1, w2, b2, w_skip, log_noise;
};

DecoderVars bind_decoder(diff::Tape& tape, const DescriptorDecoder& dec, bool trainable);
diff::Var decode_graph(diff::Tape& tape, const DecoderVars& dv, diff::Var latents);
/// Summed log-likelihood of descriptor rows given latent rows.
diff::Var descriptor_loglik_graph(diff::Tape& tape, const DecoderVars& dv, diff::Var latents,
                                  diff::Var descriptors);

/// Variational auto-encoder for pixel task descriptors. Encoder and decoder
/// are two-hidden-layer leaky-rectifier MLPs; the decoder emits logits that
/// pass through a sigmoid, and pixels carry a Gaussian likelihood with a
/// learned homoscedastic noise. The encoder heads are zero-initialized so an
/// untrained encoder outputs exactly the prior (mean 0, variance 1).
struct PixelVae {
    Matrix enc_w1, enc_b1, enc_w2, enc_b2;
    Matrix enc_wm, enc_bm, enc_wv, enc_bv;
    Matrix dec_w1, dec_b1, dec_w2, dec_b2;
    Matrix dec_wo, dec_bo;
    Matrix log_pixel_noise;  // 1 x 1

    static PixelVae create(Index image_dim, Index latent_dim, Index hidden, Rng& rng);

    Index image_dim() const { return enc_w1.rows(); }
    Index latent_dim() const { return enc_wm.cols(); }

    /// Amortized posterior parameters for each image row: (means, variances).
    std::pair<Matrix, Matrix> encode(const Matrix& images) const;

    /// Single image (flattened row-major) to its posterior embedding.
    task::TaskEmbedding encode_image(const Vector& image) const;

    /// Decoded pixel means for each latent row.
    Matrix decode(const Matrix& latents) const;

    std::vector<Matrix*> parameters();
};

struct VaeVars {
    diff::Var enc_w1, enc_b1, enc_w2, enc_b2;
    diff::Var enc_wm, enc_bm, enc_wv, enc_bv;
    diff::Var dec_w1, dec_b1, dec_w2, dec_b2;
    diff::Var dec_wo, dec_bo;
    diff::Var log_pixel_noise;
};

VaeVars bind_vae(diff::Tape& tape, const PixelVae& vae, bool trainable);

/// Encoder graph: images (rows) -> (mean, log-variance) nodes, each B x Q.
std::pair<diff::Var, diff::Var> encode_graph(diff::Tape& tape, const VaeVars& vv, diff::Var images);
/// Decoder graph: latent rows -> pixel means.
diff::Var decode_graph(diff::Tape& tape, const VaeVars& vv, diff::Var latents);
/// Summed Gaussian pixel log-likelihood of images given decoded means.
diff::Var pixel_loglik_graph(diff::Tape& tape, const VaeVars& vv, diff::Var latents,
                             diff::Var images);

/// VAE ELBO over training images (reparameterized with the given noise rows)
/// plus a reconstruction term for all candidate images at encoder means.
diff::Var vae_objective_graph(diff::Tape& tape, const VaeVars& vv, const Matrix& train_images,
                              const Matrix& candidate_images, const Matrix& noise);

/// Value-only convenience used by tests.
double vae_objective(const PixelVae& vae, const Matrix& train_images,
                     const Matrix& candidate_images, const Matrix& noise);

}  // namespace paml::desc
