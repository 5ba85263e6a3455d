#include "tplscan/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "tplscan/errors.hpp"

namespace tplscan {

using nlohmann::json;

namespace {

constexpr double kDegenerateNorm = 1e-12;

std::vector<std::vector<int>> undirected_neighbors(const Acfg& acfg) {
    const int n = acfg.block_count();
    std::vector<std::vector<char>> seen(n, std::vector<char>(n, 0));
    std::vector<std::vector<int>> nbrs(n);
    for (const auto& [src, dst] : acfg.edges) {
        if (src == dst) {
            continue;
        }
        if (!seen[src][dst]) {
            seen[src][dst] = seen[dst][src] = 1;
            nbrs[src].push_back(dst);
            nbrs[dst].push_back(src);
        }
    }
    return nbrs;
}

// Column v of the result is the sum of columns of m over v's neighbors.
Eigen::MatrixXd neighbor_sum(const Eigen::MatrixXd& m,
                             const std::vector<std::vector<int>>& nbrs) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
    for (int v = 0; v < static_cast<int>(nbrs.size()); ++v) {
        for (int u : nbrs[v]) {
            out.col(v) += m.col(u);
        }
    }
    return out;
}

struct ForwardTrace {
    std::vector<std::vector<int>> nbrs;
    Eigen::MatrixXd x;                   // d x n
    std::vector<Eigen::MatrixXd> mu;     // T+1 states, p x n
    std::vector<Eigen::MatrixXd> sums;   // neighbor sums per round
    std::vector<Eigen::MatrixXd> preact; // mlp_inner * sums per round
    Eigen::VectorXd graph_sum;           // sum_v mu_v
    Eigen::VectorXd raw;                 // w_output * graph_sum
    Eigen::VectorXd out;                 // normalized
};

ForwardTrace forward(const Acfg& acfg, const EmbeddingModel& model) {
    if (acfg.block_count() < 1) {
        throw ShapeError("ACFG '" + acfg.function_id + "' has no blocks");
    }
    const int n = acfg.block_count();
    const int p = model.embed_dim;
    const int d = model.input_dim;

    ForwardTrace tr;
    tr.nbrs = undirected_neighbors(acfg);
    tr.x.resize(d, n);
    for (int v = 0; v < n; ++v) {
        if (static_cast<int>(acfg.blocks[v].values.size()) != d) {
            throw ShapeError("attribute count mismatch in ACFG '" +
                             acfg.function_id + "'");
        }
        for (int a = 0; a < d; ++a) {
            // Compress raw attribute counts (instruction counts reach the
            // hundreds) so the tanh nonlinearity stays in its responsive
            // range instead of collapsing large blocks to sign patterns.
            tr.x(a, v) = std::log1p(acfg.blocks[v][a]);
        }
    }

    const Eigen::MatrixXd projected = model.w_input * tr.x;  // p x n
    tr.mu.push_back(Eigen::MatrixXd::Zero(p, n));
    for (int t = 0; t < model.iterations; ++t) {
        Eigen::MatrixXd sums = neighbor_sum(tr.mu.back(), tr.nbrs);
        Eigen::MatrixXd preact = model.mlp_inner * sums;
        Eigen::MatrixXd msg = model.mlp_outer * preact.cwiseMax(0.0);
        tr.mu.push_back((projected + msg).array().tanh().matrix());
        tr.sums.push_back(std::move(sums));
        tr.preact.push_back(std::move(preact));
    }
    tr.graph_sum = tr.mu.back().rowwise().sum();
    tr.raw = model.w_output * tr.graph_sum;
    const double norm = tr.raw.norm();
    if (norm < kDegenerateNorm) {
        throw DomainError("degenerate embedding for '" + acfg.function_id +
                          "' (zero graph vector)");
    }
    tr.out = tr.raw / norm;
    return tr;
}

// Accumulates parameter gradients given the gradient w.r.t. the normalized
// output vector.
void backward(const ForwardTrace& tr, const EmbeddingModel& model,
              const Eigen::VectorXd& d_out, ModelGradient& grad) {
    const double norm = tr.raw.norm();
    // Through L2 normalization: de = (I - out out^T) d_out / norm.
    Eigen::VectorXd d_raw = (d_out - tr.out * tr.out.dot(d_out)) / norm;

    grad.w_output += d_raw * tr.graph_sum.transpose();
    Eigen::VectorXd d_graph_sum = model.w_output.transpose() * d_raw;

    const int n = static_cast<int>(tr.nbrs.size());
    Eigen::MatrixXd d_mu = d_graph_sum.replicate(1, n);
    for (int t = model.iterations - 1; t >= 0; --t) {
        const Eigen::MatrixXd& mu_t = tr.mu[t + 1];
        Eigen::MatrixXd d_pre =
            d_mu.cwiseProduct((1.0 - mu_t.array().square()).matrix());
        grad.w_input += d_pre * tr.x.transpose();

        Eigen::MatrixXd relu = tr.preact[t].cwiseMax(0.0);
        grad.mlp_outer += d_pre * relu.transpose();
        Eigen::MatrixXd d_relu = model.mlp_outer.transpose() * d_pre;
        Eigen::MatrixXd d_preact = d_relu.cwiseProduct(
            (tr.preact[t].array() > 0.0).cast<double>().matrix());
        grad.mlp_inner += d_preact * tr.sums[t].transpose();
        Eigen::MatrixXd d_sums = model.mlp_inner.transpose() * d_preact;
        // Neighbor sum is symmetric, so its adjoint is the same operation.
        d_mu = neighbor_sum(d_sums, tr.nbrs);
    }
}

double pair_loss_terms(int label, double s, double& d_s) {
    const double yp = 0.5 * (1.0 + label);
    const double yn = 0.5 * (1.0 - label);
    d_s = -2.0 * yp * (1.0 - s) + 2.0 * yn * (1.0 + s);
    return yp * (1.0 - s) * (1.0 - s) + yn * (1.0 + s) * (1.0 + s);
}

}  // namespace

EmbeddingModel EmbeddingModel::initialize(int embed_dim, int iterations,
                                          std::uint64_t seed, int input_dim) {
    EmbeddingModel m;
    m.input_dim = input_dim;
    m.embed_dim = embed_dim;
    m.iterations = iterations;
    m.seed = seed;
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto fill = [&](Eigen::MatrixXd& mat, int rows, int cols) {
        mat.resize(rows, cols);
        for (int c = 0; c < cols; ++c) {
            for (int r = 0; r < rows; ++r) {
                mat(r, c) = dist(rng);
            }
        }
    };
    fill(m.w_input, embed_dim, input_dim);
    fill(m.mlp_outer, embed_dim, embed_dim);
    fill(m.mlp_inner, embed_dim, embed_dim);
    fill(m.w_output, embed_dim, embed_dim);
    return m;
}

Eigen::VectorXd embed_acfg(const Acfg& acfg, const EmbeddingModel& model) {
    return forward(acfg, model).out;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na < kDegenerateNorm || nb < kDegenerateNorm) {
        throw DomainError("cosine of a zero vector");
    }
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double contrastive_loss(std::span<const TrainingPair> pairs,
                        const EmbeddingModel& model) {
    if (pairs.empty()) {
        throw ConfigError("empty training pair list");
    }
    double total = 0.0;
    for (const auto& pair : pairs) {
        const double s = cosine(embed_acfg(pair.first, model),
                                embed_acfg(pair.second, model));
        double unused;
        total += pair_loss_terms(pair.label, s, unused);
    }
    return total;
}

ModelGradient ModelGradient::zeros(const EmbeddingModel& model) {
    ModelGradient g;
    g.w_input = Eigen::MatrixXd::Zero(model.embed_dim, model.input_dim);
    g.mlp_outer = Eigen::MatrixXd::Zero(model.embed_dim, model.embed_dim);
    g.mlp_inner = Eigen::MatrixXd::Zero(model.embed_dim, model.embed_dim);
    g.w_output = Eigen::MatrixXd::Zero(model.embed_dim, model.embed_dim);
    return g;
}

void ModelGradient::add_scaled(const ModelGradient& other, double scale) {
    w_input += scale * other.w_input;
    mlp_outer += scale * other.mlp_outer;
    mlp_inner += scale * other.mlp_inner;
    w_output += scale * other.w_output;
}

double ModelGradient::squared_norm() const {
    return w_input.squaredNorm() + mlp_outer.squaredNorm() +
           mlp_inner.squaredNorm() + w_output.squaredNorm();
}

double loss_gradient(std::span<const TrainingPair> pairs,
                     const EmbeddingModel& model, ModelGradient& grad) {
    if (pairs.empty()) {
        throw ConfigError("empty training pair list");
    }
    grad = ModelGradient::zeros(model);
    double total = 0.0;
    for (const auto& pair : pairs) {
        ForwardTrace tr_a = forward(pair.first, model);
        ForwardTrace tr_b = forward(pair.second, model);
        const double s = std::clamp(tr_a.out.dot(tr_b.out), -1.0, 1.0);
        double d_s;
        total += pair_loss_terms(pair.label, s, d_s);
        backward(tr_a, model, d_s * tr_b.out, grad);
        backward(tr_b, model, d_s * tr_a.out, grad);
    }
    return total;
}

TrainResult train(const std::vector<TrainingPair>& dataset,
                  const TrainConfig& cfg,
                  const EmbeddingModel* warm_start) {
    bool has_pos = false;
    bool has_neg = false;
    for (const auto& pair : dataset) {
        (pair.label > 0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) {
        throw ConfigError("training dataset must contain both labels");
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t val_count = std::min(
        dataset.size() - 1,
        static_cast<std::size_t>(cfg.validation_fraction * dataset.size()));
    std::vector<TrainingPair> val;
    std::vector<TrainingPair> tr;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < val_count ? val : tr).push_back(dataset[order[i]]);
    }
    if (val.empty()) {
        val = tr;  // degenerate split: validate on the training data
    }

    EmbeddingModel model =
        warm_start != nullptr
            ? *warm_start
            : EmbeddingModel::initialize(cfg.embed_dim, cfg.iterations,
                                         cfg.seed);

    // Adam state.
    ModelGradient m1 = ModelGradient::zeros(model);
    ModelGradient m2 = ModelGradient::zeros(model);
    const double beta1 = 0.9;
    const double beta2 = 0.999;
    const double eps = 1e-8;
    long step = 0;
    auto adam_update = [&](Eigen::MatrixXd& param, Eigen::MatrixXd& m,
                           Eigen::MatrixXd& v, const Eigen::MatrixXd& g) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        const double bc1 = 1.0 - std::pow(beta1, step);
        const double bc2 = 1.0 - std::pow(beta2, step);
        param.array() -= cfg.learning_rate * (m.array() / bc1) /
                         ((v.array() / bc2).sqrt() + eps);
    };

    TrainResult result;
    result.model = model;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> batch_order(tr.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    std::vector<TrainingPair> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(batch_order.begin(), batch_order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < tr.size();
             start += cfg.batch_size) {
            batch.clear();
            const std::size_t end =
                std::min(tr.size(), start + cfg.batch_size);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(tr[batch_order[i]]);
            }
            ModelGradient grad;
            epoch_loss += loss_gradient(batch, model, grad);
            const double scale = 1.0 / static_cast<double>(batch.size());
            ++step;
            adam_update(model.w_input, m1.w_input, m2.w_input,
                        scale * grad.w_input);
            adam_update(model.mlp_outer, m1.mlp_outer, m2.mlp_outer,
                        scale * grad.mlp_outer);
            adam_update(model.mlp_inner, m1.mlp_inner, m2.mlp_inner,
                        scale * grad.mlp_inner);
            adam_update(model.w_output, m1.w_output, m2.w_output,
                        scale * grad.w_output);
        }
        result.train_losses.push_back(epoch_loss /
                                      static_cast<double>(tr.size()));
        const double val_loss =
            contrastive_loss(val, model) / static_cast<double>(val.size());
        result.validation_losses.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            result.model = model;
        }
    }
    return result;
}

bool models_identical(const EmbeddingModel& a, const EmbeddingModel& b) {
    auto same = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() &&
               std::memcmp(x.data(), y.data(),
                           sizeof(double) * x.size()) == 0;
    };
    return a.input_dim == b.input_dim && a.embed_dim == b.embed_dim &&
           a.iterations == b.iterations && same(a.w_input, b.w_input) &&
           same(a.mlp_outer, b.mlp_outer) && same(a.mlp_inner, b.mlp_inner) &&
           same(a.w_output, b.w_output);
}

void EmbeddingModel::save(const std::string& path) const {
    json doc;
    doc["format_version"] = 1;
    doc["input_dim"] = input_dim;
    doc["embed_dim"] = embed_dim;
    doc["iterations"] = iterations;
    doc["seed"] = seed;
    auto dump = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (int r = 0; r < m.rows(); ++r) {
            json row = json::array();
            for (int c = 0; c < m.cols(); ++c) {
                row.push_back(m(r, c));
            }
            rows.push_back(std::move(row));
        }
        return rows;
    };
    doc["w_input"] = dump(w_input);
    doc["mlp_outer"] = dump(mlp_outer);
    doc["mlp_inner"] = dump(mlp_inner);
    doc["w_output"] = dump(w_output);
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write model checkpoint " + path);
    }
    out << doc.dump() << "\n";
}

EmbeddingModel EmbeddingModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open model checkpoint " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ValidationError("invalid model checkpoint " + path + ": " +
                              e.what());
    }
    if (!doc.contains("format_version") || doc["format_version"] != 1) {
        throw ValidationError("unsupported checkpoint format in " + path);
    }
    EmbeddingModel m;
    m.input_dim = doc.at("input_dim").get<int>();
    m.embed_dim = doc.at("embed_dim").get<int>();
    m.iterations = doc.at("iterations").get<int>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    auto parse = [&](const char* key, int rows, int cols) {
        const json& data = doc.at(key);
        if (static_cast<int>(data.size()) != rows) {
            throw ValidationError(std::string("bad matrix shape for ") + key);
        }
        Eigen::MatrixXd mat(rows, cols);
        for (int r = 0; r < rows; ++r) {
            if (static_cast<int>(data[r].size()) != cols) {
                throw ValidationError(std::string("bad matrix shape for ") + key);
            }
            for (int c = 0; c < cols; ++c) {
                mat(r, c) = data[r][c].get<double>();
            }
        }
        return mat;
    };
    m.w_input = parse("w_input", m.embed_dim, m.input_dim);
    m.mlp_outer = parse("mlp_outer", m.embed_dim, m.embed_dim);
    m.mlp_inner = parse("mlp_inner", m.embed_dim, m.embed_dim);
    m.w_output = parse("w_output", m.embed_dim, m.embed_dim);
    return m;
}

}  // namespace tplscan
