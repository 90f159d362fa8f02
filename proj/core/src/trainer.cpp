// Copyright 2026 The vqkv authors
// SPDX-License-Identifier: Apache-2.0

#include "vqkv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vqkv {

namespace {

struct Forward {
    CodeVector codes;
    // residuals[i] is the input to stage i; residuals[N] is the final
    // residual (== reconstruction error vector).
    std::vector<VectorF> residuals;
};

Forward forward_pass(const CodebookStack& stack, const Eigen::Ref<const VectorF>& x) {
    Forward f;
    QuantizeResult q = quantize(stack, x);
    f.codes = std::move(q.codes);
    f.residuals.resize(stack.num_stages() + 1);
    f.residuals[0] = x;
    for (size_t i = 0; i < stack.num_stages(); ++i) {
        f.residuals[i + 1] =
                f.residuals[i] - stack.stages[i].effective.row(f.codes[i]).transpose();
    }
    return f;
}

LossTerms accumulate_loss(const CodebookStack& stack, const Eigen::Ref<const MatrixF>& batch,
                          float beta, float gamma, bool square_commitment,
                          std::vector<MatrixF>* grad_proj, std::vector<MatrixF>* grad_entries) {
    const size_t n_stages = stack.num_stages();
    const Eigen::Index b = batch.rows();
    LossTerms terms;
    std::vector<VectorF> grad_e(n_stages);

    for (Eigen::Index row = 0; row < b; ++row) {
        Forward f = forward_pass(stack, batch.row(row).transpose());
        const VectorF& final_res = f.residuals[n_stages];
        terms.reconstruction += final_res.squaredNorm();
        for (size_t i = 0; i < n_stages; ++i) {
            double sq = f.residuals[i + 1].squaredNorm();
            terms.codebook_pull += sq;
            terms.commitment += square_commitment ? sq : std::sqrt(sq);
        }
        if (!grad_proj) {
            continue;
        }

        // Straight-through gradients: the argmin is treated as constant.
        // suffix holds the commitment term's pull on earlier stages, since
        // stage i's incoming residual depends on every previous selection.
        VectorF suffix = VectorF::Zero(stack.dim());
        for (size_t i = n_stages; i-- > 0;) {
            grad_e[i] = -2.0f * final_res - 2.0f * beta * f.residuals[i + 1] - gamma * suffix;
            VectorF step;
            if (square_commitment) {
                step = 2.0f * f.residuals[i + 1];
            } else {
                float norm = f.residuals[i + 1].norm();
                step = norm > 0.0f ? VectorF(f.residuals[i + 1] / norm)
                                   : VectorF(VectorF::Zero(stack.dim()));
            }
            suffix += step;
        }
        for (size_t i = 0; i < n_stages; ++i) {
            const auto entry = stack.stages[i].entries.row(f.codes[i]);
            (*grad_proj)[i].noalias() += grad_e[i] * entry;
            if (grad_entries) {
                (*grad_entries)[i].row(f.codes[i]).noalias() +=
                        (stack.stages[i].projection.transpose() * grad_e[i]).transpose();
            }
        }
    }
    terms.reconstruction /= b;
    terms.codebook_pull /= b;
    terms.commitment /= b;
    terms.total = terms.reconstruction + beta * terms.codebook_pull + gamma * terms.commitment;
    return terms;
}

std::vector<double> holdout_stage_mse(const CodebookStack& stack,
                                      const Eigen::Ref<const MatrixF>& data,
                                      const std::vector<size_t>& rows) {
    std::vector<double> mse(stack.num_stages(), 0.0);
    for (size_t r : rows) {
        Forward f = forward_pass(stack, data.row(static_cast<Eigen::Index>(r)).transpose());
        for (size_t i = 0; i < stack.num_stages(); ++i) {
            mse[i] += f.residuals[i + 1].squaredNorm();
        }
    }
    for (auto& m : mse) {
        m /= static_cast<double>(rows.size());
    }
    return mse;
}

} // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0f) {
        throw InvalidInput("learning_rate must be positive");
    }
    if (batch_size < 1) {
        throw InvalidInput("batch_size must be >= 1");
    }
    if (beta < 0.0f || gamma < 0.0f) {
        throw InvalidInput("beta and gamma must be nonnegative");
    }
    if (init_scale < 0.0f || !std::isfinite(init_scale)) {
        throw InvalidInput("init_scale must be a finite nonnegative value");
    }
    if (holdout_fraction < 0.0f || holdout_fraction >= 1.0f) {
        throw InvalidInput("holdout_fraction must be in [0, 1)");
    }
}

CodebookStack init_stack(Eigen::Index dim, const std::vector<uint32_t>& stage_sizes,
                         const TrainConfig& config, CacheKind kind) {
    config.validate();
    if (dim < 1) {
        throw InvalidInput("dimension must be >= 1");
    }
    if (stage_sizes.empty()) {
        throw InvalidInput("need at least one stage");
    }
    for (uint32_t s : stage_sizes) {
        if (s < 2) {
            throw InvalidInput("every stage size must be >= 2");
        }
    }
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    CodebookStack stack;
    stack.cache_kind = kind;
    stack.stages.resize(stage_sizes.size());
    for (size_t i = 0; i < stage_sizes.size(); ++i) {
        Codebook& cb = stack.stages[i];
        cb.entries.resize(stage_sizes[i], dim);
        for (Eigen::Index j = 0; j < cb.entries.size(); ++j) {
            cb.entries.data()[j] = config.init_scale * gauss(rng);
        }
        cb.projection = MatrixF::Identity(dim, dim);
        cb.refresh();
    }
    return stack;
}

LossTerms loss(const CodebookStack& stack, const Eigen::Ref<const MatrixF>& batch,
               float beta, float gamma, bool square_commitment) {
    if (batch.rows() < 1) {
        throw InvalidInput("loss needs a nonempty batch");
    }
    if (batch.cols() != stack.dim()) {
        throw InvalidInput("batch dimension does not match stack");
    }
    return accumulate_loss(stack, batch, beta, gamma, square_commitment, nullptr, nullptr);
}

TrainResult train(const VectorDataset& dataset, const std::vector<uint32_t>& stage_sizes,
                  const TrainConfig& config, CacheKind kind) {
    dataset.validate();
    config.validate();
    const size_t count = static_cast<size_t>(dataset.count());
    const Eigen::Index dim = dataset.dim();

    // Desk-scale datasets cannot fill production-scale batches.
    size_t batch = config.batch_size;
    if (count < 10 * batch) {
        batch = std::min<size_t>(batch, 1024);
    }

    std::mt19937_64 rng(config.seed);
    std::vector<size_t> order(count);
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    size_t n_holdout = 0;
    if (count >= 2) {
        n_holdout = std::max<size_t>(1, static_cast<size_t>(
                std::llround(static_cast<double>(count) * config.holdout_fraction)));
        n_holdout = std::min(n_holdout, count - 1);
    }
    std::vector<size_t> holdout(order.end() - static_cast<ptrdiff_t>(n_holdout), order.end());
    std::vector<size_t> train_rows(order.begin(), order.end() - static_cast<ptrdiff_t>(n_holdout));
    if (holdout.empty()) {
        holdout = train_rows; // single-vector dataset: evaluate in-sample
    }

    TrainResult result;
    result.stack = init_stack(dim, stage_sizes, config, kind);
    CodebookStack& stack = result.stack;
    const size_t n_stages = stack.num_stages();

    std::vector<MatrixF> grad_proj(n_stages);
    std::vector<MatrixF> grad_entries;
    if (config.train_entries) {
        grad_entries.resize(n_stages);
    }
    MatrixF batch_buf;

    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(train_rows.begin(), train_rows.end(), rng);
        double epoch_loss = 0.0;
        size_t seen = 0;
        for (size_t begin = 0; begin < train_rows.size(); begin += batch) {
            size_t len = std::min(batch, train_rows.size() - begin);
            batch_buf.resize(static_cast<Eigen::Index>(len), dim);
            for (size_t i = 0; i < len; ++i) {
                batch_buf.row(static_cast<Eigen::Index>(i)) =
                        dataset.payload.row(static_cast<Eigen::Index>(train_rows[begin + i]));
            }
            for (size_t i = 0; i < n_stages; ++i) {
                grad_proj[i] = MatrixF::Zero(dim, dim);
                if (config.train_entries) {
                    grad_entries[i] = MatrixF::Zero(stack.stages[i].size(), dim);
                }
            }
            LossTerms terms = accumulate_loss(
                    stack, batch_buf, config.beta, config.gamma, config.square_commitment,
                    &grad_proj, config.train_entries ? &grad_entries : nullptr);
            if (!std::isfinite(terms.total)) {
                throw DivergedError("training loss became non-finite", epoch + 1);
            }
            float step = config.learning_rate / static_cast<float>(len);
            for (size_t i = 0; i < n_stages; ++i) {
                stack.stages[i].projection.noalias() -= step * grad_proj[i];
                if (config.train_entries) {
                    stack.stages[i].entries.noalias() -= step * grad_entries[i];
                }
                stack.stages[i].refresh();
            }
            epoch_loss += terms.total * static_cast<double>(len);
            seen += len;
        }
        result.report.per_epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    }

    result.report.per_stage_mse = holdout_stage_mse(stack, dataset.payload, holdout);
    result.report.final_mse = result.report.per_stage_mse.back();
    return result;
}

} // namespace vqkv
