// This file is part of the mrsfa library.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>

#include "mrsfa/fisher.hpp"

namespace mrsfa {

/// One-against-all linear SVM. One weight row per class (bias folded in as a
/// trailing augmented-constant coordinate); prediction is the arg max of the
/// per-class decision values, ties broken by class order.
struct LinearOvaSvm {
    std::vector<std::string> class_labels;  // sorted; row i classifies label i
    Eigen::MatrixXd weights;                // n_classes x (dim + 1), bias last
    double C = 1.0;
    int epochs_run = 0;
    double tol = 1e-4;

    int classes() const { return static_cast<int>(class_labels.size()); }
    int dim() const { return static_cast<int>(weights.cols()) - 1; }
};

struct SvmTrainStats {
    // Per epoch, for the slowest-converging class. The dual is what the
    // optimizer ascends and is monotone by construction; the primal
    // (regularized hinge) converges to the same value but is not monotone
    // under coordinate updates.
    std::vector<double> primal_objective;
    std::vector<double> dual_objective;
};

namespace detail {

// Dual coordinate descent for the L1-loss (hinge) L2-regularized binary SVM:
//   min_w 0.5 ||w||^2 + C sum_i max(0, 1 - y_i w.x_i)
// on bias-augmented inputs. Deterministic: cyclic order with a seeded
// shuffle per epoch. Follows the classic liblinear update rule.
inline Eigen::VectorXd dcd_binary(const Eigen::MatrixXd& x_aug, const std::vector<double>& y,
                                  double C, std::uint64_t seed, double tol, int max_epochs,
                                  int* epochs_out, std::vector<double>* primal_per_epoch,
                                  std::vector<double>* dual_per_epoch = nullptr) {
    const Eigen::Index n = x_aug.cols();
    const Eigen::Index d = x_aug.rows();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd qii(n);
    for (Eigen::Index i = 0; i < n; ++i) qii(i) = x_aug.col(i).squaredNorm();

    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);

    int epoch = 0;
    for (; epoch < max_epochs; ++epoch) {
        rng.shuffle(order);
        double max_violation = 0.0;
        for (const std::size_t idx : order) {
            const Eigen::Index i = static_cast<Eigen::Index>(idx);
            if (qii(i) <= 0.0) continue;
            const double g = y[idx] * w.dot(x_aug.col(i)) - 1.0;
            double pg = g;
            if (alpha(i) <= 0.0) pg = std::min(g, 0.0);
            else if (alpha(i) >= C) pg = std::max(g, 0.0);
            max_violation = std::max(max_violation, std::abs(pg));
            if (pg != 0.0) {
                const double old = alpha(i);
                alpha(i) = std::clamp(old - g / qii(i), 0.0, C);
                if (alpha(i) != old) w += (alpha(i) - old) * y[idx] * x_aug.col(i);
            }
        }
        if (primal_per_epoch) {
            double hinge = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                hinge += std::max(0.0, 1.0 - y[static_cast<std::size_t>(i)] * w.dot(x_aug.col(i)));
            primal_per_epoch->push_back(0.5 * w.squaredNorm() + C * hinge);
        }
        if (dual_per_epoch) dual_per_epoch->push_back(alpha.sum() - 0.5 * w.squaredNorm());
        if (max_violation < tol) {
            ++epoch;
            break;
        }
    }
    if (epochs_out) *epochs_out = epoch;
    return w;
}

}  // namespace detail

/// Train a one-against-all SVM on column representations. Labels are sorted
/// and deduplicated; deterministic given the seed.
inline LinearOvaSvm train_svm(const Eigen::MatrixXd& reps, const std::vector<std::string>& labels,
                              double C = 1.0, std::uint64_t seed = 0, double tol = 1e-4,
                              int max_epochs = 1000, SvmTrainStats* stats = nullptr) {
    const Eigen::Index n = reps.cols();
    if (n == 0) fail("EmptyData", "no training representations");
    if (static_cast<Eigen::Index>(labels.size()) != n) fail("DimMismatch", "label count mismatch");

    LinearOvaSvm model;
    model.C = C;
    model.tol = tol;
    {
        std::map<std::string, int> unique;
        for (const auto& l : labels) unique.emplace(l, 0);
        for (auto& [label, id] : unique) {
            id = static_cast<int>(model.class_labels.size());
            model.class_labels.push_back(label);
        }
        if (model.class_labels.size() < 2) fail("SingleClass", "need at least two classes");
    }

    Eigen::MatrixXd x_aug(reps.rows() + 1, n);
    x_aug.topRows(reps.rows()) = reps;
    x_aug.bottomRows(1).setOnes();

    model.weights.resize(model.classes(), reps.rows() + 1);
    std::vector<double> y(static_cast<std::size_t>(n));
    int worst_epochs = 0;
    for (int c = 0; c < model.classes(); ++c) {
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = (labels[i] == model.class_labels[static_cast<std::size_t>(c)]) ? 1.0 : -1.0;
        int epochs = 0;
        std::vector<double> primal, dual;
        model.weights.row(c) = detail::dcd_binary(x_aug, y, C, Rng::mix(seed) + static_cast<std::uint64_t>(c),
                                                  tol, max_epochs, &epochs,
                                                  stats ? &primal : nullptr,
                                                  stats ? &dual : nullptr)
                                   .transpose();
        worst_epochs = std::max(worst_epochs, epochs);
        if (stats && primal.size() > stats->primal_objective.size()) {
            stats->primal_objective = primal;
            stats->dual_objective = dual;
        }
    }
    model.epochs_run = worst_epochs;
    return model;
}

/// Predicted label plus the per-class decision values.
inline std::pair<std::string, Eigen::VectorXd> predict(const LinearOvaSvm& model, const Eigen::VectorXd& rep) {
    if (rep.size() != model.dim()) fail("DimMismatch", "representation dimension mismatch");
    Eigen::VectorXd aug(rep.size() + 1);
    aug.head(rep.size()) = rep;
    aug(rep.size()) = 1.0;
    Eigen::VectorXd decisions = model.weights * aug;
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < decisions.size(); ++c)
        if (decisions(c) > decisions(best)) best = c;  // ties keep the lower class index
    return {model.class_labels[static_cast<std::size_t>(best)], decisions};
}

// ---------------------------------------------------------------------------
// Model file `svm.ssm`: magic "SSM1", u32 LE n_classes and dim, then per
// class a u32 LE label length + label bytes, then per class (dim + 1) f64 LE
// weights (bias last).

inline void save_svm(const LinearOvaSvm& model, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("IoError", "cannot write " + path.string());
    write_magic(os, "SSM1");
    write_u32(os, static_cast<std::uint32_t>(model.classes()));
    write_u32(os, static_cast<std::uint32_t>(model.dim()));
    for (const auto& label : model.class_labels) {
        write_u32(os, static_cast<std::uint32_t>(label.size()));
        os.write(label.data(), static_cast<std::streamsize>(label.size()));
    }
    for (int c = 0; c < model.classes(); ++c)
        for (int i = 0; i <= model.dim(); ++i) write_f64(os, model.weights(c, i));
    if (!os) fail("IoError", "short write to " + path.string());
}

inline LinearOvaSvm load_svm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("CorruptHeader", "cannot open " + path.string());
    expect_magic(is, "SSM1", path.string());
    LinearOvaSvm model;
    const int n_classes = static_cast<int>(read_u32(is));
    const int dim = static_cast<int>(read_u32(is));
    for (int c = 0; c < n_classes; ++c) {
        const int len = static_cast<int>(read_u32(is));
        std::string label(static_cast<std::size_t>(len), '\0');
        is.read(label.data(), len);
        model.class_labels.push_back(std::move(label));
    }
    model.weights.resize(n_classes, dim + 1);
    for (int c = 0; c < n_classes; ++c)
        for (int i = 0; i <= dim; ++i) model.weights(c, i) = read_f64(is);
    if (!is) fail("CorruptHeader", "truncated payload in " + path.string());
    return model;
}

}  // namespace mrsfa
