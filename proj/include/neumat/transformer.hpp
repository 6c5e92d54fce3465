#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "neumat/errors.hpp"

namespace neumat {

/// Denoiser architecture knobs. data_dim and token_size control the weight
/// tokenization (tokens are zero-padded when token_size does not divide
/// data_dim); the rest size the encoder stack. Everything is persisted in
/// checkpoints, so toy-scale models remain loadable.
struct DenoiserConfig {
    int data_dim = 675;
    int token_size = 27;
    int d_model = 256;
    int n_layers = 6;
    int n_heads = 8;
    int ffn_mult = 4;
    int n_types = 48;
    int text_dim = 0;  // 0 disables the text adapter
    int image_dim = 0; // 0 disables the image adapter
};

/// What the sampler is asked to honor: a material type id, an external
/// embedding vector routed through the matching adapter, or nothing.
struct Condition {
    enum class Kind { Null, TypeId, Text, Image };
    Kind kind = Kind::Null;
    int type_id = 0;
    Eigen::VectorXd embedding;

    static Condition null() { return {}; }
    static Condition type(int id) {
        Condition c;
        c.kind = Kind::TypeId;
        c.type_id = id;
        return c;
    }
    static Condition text(Eigen::VectorXd e) {
        Condition c;
        c.kind = Kind::Text;
        c.embedding = std::move(e);
        return c;
    }
    static Condition image(Eigen::VectorXd e) {
        Condition c;
        c.kind = Kind::Image;
        c.embedding = std::move(e);
        return c;
    }
};

/// Offsets of every parameter tensor inside the flat vector. Sequence
/// layout: token 0 is the time token, token 1 the condition token, then
/// ceil(data_dim / token_size) weight tokens. Blocks are post-LN:
/// x = LN(x + MHA(x)); x = LN(x + FFN(x)).
struct ParamLayout {
    int data_dim, token_size, d_model, n_layers, n_heads, ffn;
    int n_types, text_dim, image_dim;
    int n_weight_tokens, n_tokens, head_dim;

    int in_w, in_b;       // d_model x token_size, d_model
    int pos;              // d_model x n_tokens (learnable, every slot)
    int time_w1, time_b1; // d_model x d_model, d_model
    int time_w2, time_b2;
    int type_table;       // d_model x n_types
    int null_vec;         // d_model
    int text_w;           // d_model x text_dim (0-sized when disabled)
    int image_w;
    struct Block {
        int wq, bq, wk, bk, wv, bv, wo, bo;
        int ln1_g, ln1_b;
        int w1, b1, w2, b2; // FFN
        int ln2_g, ln2_b;
    };
    std::vector<Block> blocks;
    int out_w, out_b; // token_size x d_model, token_size
    int total;

    explicit ParamLayout(const DenoiserConfig& cfg);
};

int denoiser_param_count(const DenoiserConfig& cfg);

/// Glorot-uniform matrices, zero biases, unit layer-norm gains, N(0, 0.02)
/// positional encodings and type table, zero null vector, and a
/// zero-initialized output projection so the initial prediction is zero.
Eigen::VectorXd init_denoiser(const DenoiserConfig& cfg, uint64_t seed);

/// One prediction: tokenize, run the stack, project back. Pure in
/// (flat, x, t, cond).
Eigen::VectorXd tf_denoise(const ParamLayout& layout,
                           const Eigen::VectorXd& flat,
                           const Eigen::VectorXd& x, int t,
                           const Condition& cond);

/// One training example in normalized space.
struct DiffusionItem {
    Eigen::VectorXd x_t;
    int t = 1;
    Condition cond;
    Eigen::VectorXd eps; // regression target
};

/// Mean over items and coordinates of (eps - prediction)^2, with the full
/// parameter gradient. Items are processed in order with per-item
/// accumulation, so results are deterministic.
double tf_loss_and_grad(const ParamLayout& layout, const Eigen::VectorXd& flat,
                        const std::vector<DiffusionItem>& batch,
                        Eigen::VectorXd& grad);

} // namespace neumat
