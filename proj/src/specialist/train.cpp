#include "clarify/specialist/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <utility>

#include "clarify/error.hpp"
#include "clarify/kernels/dense.hpp"

namespace clarify::specialist {

void TrainingConfig::validate() const {
    require(lr_stage1 > 0.0 && lr_stage2 > 0.0, ErrorCode::ConfigError, "learning rates must be > 0");
    require(lr_stage2 < lr_stage1, ErrorCode::ConfigError, "lr_stage2 must be below lr_stage1");
    require(stage_switch_accuracy > 0.0 && stage_switch_accuracy < 1.0, ErrorCode::ConfigError,
            "stage_switch_accuracy must lie in (0, 1)");
    require(weight_decay >= 0.0, ErrorCode::ConfigError, "weight_decay must be >= 0");
    require(max_epochs > 0, ErrorCode::ConfigError, "max_epochs must be positive");
    require(batch_size > 0, ErrorCode::ConfigError, "batch_size must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorCode::ConfigError,
            "Adam betas must lie in [0, 1)");
    require(adam_epsilon > 0.0, ErrorCode::ConfigError, "adam_epsilon must be > 0");
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
    TrainingConfig c;
    try {
        c.lr_stage1 = j.value("lr_stage1", c.lr_stage1);
        c.lr_stage2 = j.value("lr_stage2", c.lr_stage2);
        c.stage_switch_accuracy = j.value("stage_switch_accuracy", c.stage_switch_accuracy);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.activation = activation_from_string(j.value("activation", std::string("relu")));
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json TrainingConfig::to_json() const {
    return {{"lr_stage1", lr_stage1},     {"lr_stage2", lr_stage2},
            {"stage_switch_accuracy", stage_switch_accuracy},
            {"weight_decay", weight_decay}, {"max_epochs", max_epochs},
            {"batch_size", batch_size},   {"seed", seed},
            {"hidden_dim", hidden_dim},   {"activation", std::string(to_string(activation))},
            {"beta1", beta1},             {"beta2", beta2},
            {"adam_epsilon", adam_epsilon}};
}

void LabeledEmbeddingSet::validate() const {
    require(embeddings.size() == labels.size(), ErrorCode::InvalidArgument,
            "embeddings and labels differ in length");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(embeddings[i].dim() == embeddings.front().dim(), ErrorCode::InvalidArgument,
                "record " + std::to_string(i) + " has a different embedding dim");
        require(labels[i] < class_names.size(), ErrorCode::InvalidArgument,
                "record " + std::to_string(i) + " has an out-of-range label");
    }
}

std::vector<double> LabeledEmbeddingSet::gather(const std::vector<std::size_t>& rows) const {
    const std::size_t d = dim();
    std::vector<double> out(rows.size() * d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto v = embeddings[rows[r]].values();
        std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    return out;
}

namespace {

// Per-row log-sum-exp cross-entropy and softmax probabilities, in place.
double softmax_cross_entropy(std::vector<double>& logits_to_probs, std::size_t n, std::size_t k,
                             std::span<const std::size_t> labels) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double* row = logits_to_probs.data() + r * k;
        const double mx = *std::max_element(row, row + k);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(row[c] - mx);
        const double lse = mx + std::log(sum);
        total += lse - row[labels[r]];
        for (std::size_t c = 0; c < k; ++c) row[c] = std::exp(row[c] - lse);
    }
    return total / static_cast<double>(n);
}

}  // namespace

LossGradient loss_and_gradient(const ClassifierHead& head, std::span<const double> z,
                               std::span<const std::size_t> labels) {
    const auto& p = head.params();
    const std::size_t n = labels.size();
    const std::size_t d = head.input_dim();
    const std::size_t h = head.hidden_dim();
    const std::size_t k = head.num_classes();
    require(n > 0 && z.size() == n * d, ErrorCode::DimensionMismatch, "batch shape mismatch");

    std::vector<double> pre(n * h);
    kernels::affine_rows(z, n, d, p.w1.data, p.b1, h, pre);
    std::vector<double> hidden(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) hidden[i] = activate(head.activation(), pre[i]);
    std::vector<double> probs(n * k);
    kernels::affine_rows(hidden, n, h, p.w2.data, p.b2, k, probs);

    LossGradient out;
    out.loss = softmax_cross_entropy(probs, n, k, labels);

    // dL/dlogits = (p - onehot) / n
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double>& dlogits = probs;
    for (std::size_t r = 0; r < n; ++r) dlogits[r * k + labels[r]] -= 1.0;
    for (auto& v : dlogits) v *= inv_n;

    auto& g = out.grad;
    g.w1 = Matrix(h, d);
    g.b1.assign(h, 0.0);
    g.w2 = Matrix(k, h);
    g.b2.assign(k, 0.0);
    kernels::accumulate_outer(dlogits, n, k, hidden, h, g.w2.data);
    kernels::accumulate_column_sums(dlogits, n, k, g.b2);

    std::vector<double> dpre(n * h);
    kernels::backprop_rows(dlogits, n, k, p.w2.data, h, dpre);
    for (std::size_t i = 0; i < dpre.size(); ++i)
        dpre[i] *= activate_derivative(head.activation(), pre[i]);
    kernels::accumulate_outer(dpre, n, h, z, d, g.w1.data);
    kernels::accumulate_column_sums(dpre, n, h, g.b1);
    return out;
}

double cross_entropy(const ClassifierHead& head, std::span<const double> z,
                     std::span<const std::size_t> labels) {
    const std::size_t n = labels.size();
    auto logits = forward_batch(head, z, n);
    return softmax_cross_entropy(logits, n, head.num_classes(), labels);
}

double accuracy(const ClassifierHead& head, const LabeledEmbeddingSet& data) {
    if (data.size() == 0) return 0.0;
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    const auto z = data.gather(all);
    const auto logits = forward_batch(head, z, data.size());
    const std::size_t k = head.num_classes();
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const std::span<const double> row(logits.data() + r * k, k);
        if (argmax(row) == data.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
};

// Views the parameter blocks in a fixed order: w1, b1, w2, b2.
template <typename Params, typename Fn>
void for_each_block(Params& p, Fn&& fn) {
    fn(p.w1.data, true);
    fn(p.b1, false);
    fn(p.w2.data, true);
    fn(p.b2, false);
}

void adam_update(HeadParameters& params, const HeadParameters& grad, AdamState& state, double lr,
                 const TrainingConfig& cfg) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    std::size_t offset = 0;
    std::vector<std::span<const double>> grads;
    for_each_block(grad, [&](const std::vector<double>& g, bool) { grads.emplace_back(g); });
    std::size_t block = 0;
    for_each_block(params, [&](std::vector<double>& w, bool is_weight) {
        const auto g = grads[block++];
        for (std::size_t i = 0; i < w.size(); ++i) {
            double& m = state.m[offset + i];
            double& v = state.v[offset + i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g[i];
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            double update = mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
            if (is_weight) update += cfg.weight_decay * w[i];
            w[i] -= lr * update;
        }
        offset += w.size();
    });
}

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
}

}  // namespace

TrainingResult train_from(ClassifierHead initial, const LabeledEmbeddingSet& data,
                          const TrainingConfig& cfg) {
    cfg.validate();
    require(data.size() > 0, ErrorCode::DegenerateDataset, "training set is empty");
    data.validate();
    require(data.dim() == initial.input_dim(), ErrorCode::DimensionMismatch,
            "training embeddings do not match the head input dim");
    require(data.class_names == initial.class_names(), ErrorCode::InvalidArgument,
            "training classes do not match the head");
    const std::set<std::size_t> present(data.labels.begin(), data.labels.end());
    require(present.size() >= 2, ErrorCode::DegenerateDataset,
            "training data contains a single class");

    HeadParameters params = initial.params();
    const Activation act = initial.activation();
    const auto names = initial.class_names();

    AdamState adam;
    adam.m.assign(params.count(), 0.0);
    adam.v.assign(params.count(), 0.0);

    std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5ULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    TrainingResult result{std::move(initial), {}};
    int stage = 1;
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle(order, rng);
        const double lr = stage == 1 ? cfg.lr_stage1 : cfg.lr_stage2;
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<std::size_t> labels(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = data.labels[rows[i]];
            const auto z = data.gather(rows);

            const ClassifierHead current(params, act, names);
            auto lg = loss_and_gradient(current, z, labels);
            if (!std::isfinite(lg.loss)) {
                fail(ErrorCode::DivergedTraining, "loss became non-finite in epoch "
                                                      + std::to_string(epoch));
            }
            loss_sum += lg.loss * static_cast<double>(rows.size());
            adam_update(params, lg.grad, adam, lr, cfg);
        }

        for (double w : params.w1.data) {
            if (!std::isfinite(w))
                fail(ErrorCode::DivergedTraining, "weights became non-finite in epoch "
                                                      + std::to_string(epoch));
        }
        result.head = ClassifierHead(params, act, names);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(data.size());
        rec.train_accuracy = accuracy(result.head, data);
        rec.stage = stage;
        if (stage == 1 && rec.train_accuracy >= cfg.stage_switch_accuracy) {
            rec.stage_switched = true;
            stage = 2;
        }
        result.history.push_back(rec);
    }
    return result;
}

TrainingResult train(const LabeledEmbeddingSet& data, const TrainingConfig& cfg) {
    cfg.validate();
    require(data.size() > 0, ErrorCode::DegenerateDataset, "training set is empty");
    require(data.class_names.size() >= 2, ErrorCode::DegenerateDataset,
            "training data names fewer than two classes");
    const std::size_t hidden = cfg.hidden_dim > 0 ? cfg.hidden_dim : default_hidden_dim(data.dim());
    auto head = ClassifierHead::glorot(data.dim(), hidden, data.class_names, cfg.activation,
                                       cfg.seed);
    return train_from(std::move(head), data, cfg);
}

double grad_check(const ClassifierHead& head, const LabeledEmbeddingSet& batch, double epsilon) {
    require(epsilon > 0.0 && epsilon <= 1e-2, ErrorCode::InvalidArgument,
            "grad_check epsilon must lie in (0, 1e-2]");
    require(batch.size() > 0, ErrorCode::InvalidArgument, "grad_check needs a non-empty batch");
    batch.validate();

    std::vector<std::size_t> all(batch.size());
    std::iota(all.begin(), all.end(), 0);
    const auto z = batch.gather(all);
    const auto analytic = loss_and_gradient(head, z, batch.labels).grad;

    HeadParameters probe = head.params();
    std::vector<std::span<const double>> grads;
    for_each_block(analytic, [&](const std::vector<double>& g, bool) { grads.emplace_back(g); });

    double worst = 0.0;
    std::size_t block = 0;
    for_each_block(probe, [&](std::vector<double>& w, bool) {
        const auto g = grads[block++];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + epsilon;
            const double up = cross_entropy(ClassifierHead(probe, head.activation(), head.class_names()),
                                            z, batch.labels);
            w[i] = saved - epsilon;
            const double down = cross_entropy(
                ClassifierHead(probe, head.activation(), head.class_names()), z, batch.labels);
            w[i] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double denom = std::max({std::abs(g[i]), std::abs(numeric), 1.0});
            worst = std::max(worst, std::abs(g[i] - numeric) / denom);
        }
    });
    return worst;
}

}  // namespace clarify::specialist
