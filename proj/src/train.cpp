/*
 * Copyright 2026 The lipkernel authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lipkernel/train.hpp"

#include <cmath>
#include <sstream>

#include "lipkernel/arch.hpp"
#include "lipkernel/errors.hpp"
#include "lipkernel/rng.hpp"

namespace lipkernel::train {

using namespace lipkernel::la;
using layers::LayerKind;
using nn::NetSpec;
using nn::PhiNetwork;
using nn::PlainNetwork;

std::string metrics_csv(const std::vector<MetricsRow> &rows) {
    std::ostringstream os;
    os << "epoch,split,loss,accuracy\n";
    os.setf(std::ios::fmtflags(0), std::ios::floatfield);
    os.precision(12);
    for (const MetricsRow &r : rows)
        os << r.epoch << "," << r.split << "," << r.loss << "," << r.accuracy << "\n";
    return os.str();
}

// ---- losses --------------------------------------------------------------

Var cross_entropy(Tape &t, Var logits, const std::vector<int> &labels) {
    const Mat &z = t.val(logits);
    int b = z.rows(), c = z.cols();
    if (b != static_cast<int>(labels.size()))
        throw ShapeMismatch("cross_entropy: label count mismatch");
    Mat shift(b, c);
    for (int i = 0; i < b; ++i) {
        double top = z(i, 0);
        for (int j = 1; j < c; ++j)
            top = std::max(top, z(i, j));
        for (int j = 0; j < c; ++j)
            shift(i, j) = top;
    }
    Var zs = t.sub(logits, t.constant(shift));
    Var lse = t.log(t.row_sum(t.exp(zs)));
    std::vector<long> idx(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= c)
            throw InvalidParameter("cross_entropy: label out of range");
        idx[static_cast<size_t>(i)] = static_cast<long>(i) * c + y;
    }
    Var picked = t.gather(zs, std::move(idx), b, 1);
    return t.scale(t.sum(t.sub(lse, picked)), 1.0 / b);
}

Var mse(Tape &t, Var pred, const Mat &targets) {
    if (!t.val(pred).same_shape(targets))
        throw ShapeMismatch("mse: target shape mismatch");
    double n = static_cast<double>(targets.size());
    return t.scale(t.sum_sq(t.sub(pred, t.constant(targets))), 1.0 / n);
}

double accuracy(const Mat &logits, const std::vector<int> &labels) {
    if (logits.rows() != static_cast<int>(labels.size()))
        throw ShapeMismatch("accuracy: label count mismatch");
    if (logits.rows() == 0)
        return 0.0;
    int hits = 0;
    for (int i = 0; i < logits.rows(); ++i) {
        int arg = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, arg))
                arg = j;
        if (arg == labels[static_cast<size_t>(i)])
            ++hits;
    }
    return static_cast<double>(hits) / logits.rows();
}

// ---- optimizer -----------------------------------------------------------

void Adam::step(std::vector<std::map<std::string, Mat>> &params,
                const std::vector<std::map<std::string, Mat>> &grads) {
    if (m.empty()) {
        for (const auto &layer : params) {
            std::map<std::string, Mat> zm, zv;
            for (const auto &[name, value] : layer) {
                zm.emplace(name, Mat(value.rows(), value.cols()));
                zv.emplace(name, Mat(value.rows(), value.cols()));
            }
            m.push_back(std::move(zm));
            v.push_back(std::move(zv));
        }
    }
    if (grads.size() != params.size())
        throw ShapeMismatch("adam: gradient list does not match the parameters");
    ++t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i)
        for (auto &[name, value] : params[i]) {
            const Mat &g = grads[i].at(name);
            Mat &mi = m[i][name];
            Mat &vi = v[i][name];
            for (size_t k = 0; k < value.size(); ++k) {
                double gk = g.at(k);
                mi.at(k) = beta1 * mi.at(k) + (1.0 - beta1) * gk;
                vi.at(k) = beta2 * vi.at(k) + (1.0 - beta2) * gk * gk;
                double mh = mi.at(k) / c1;
                double vh = vi.at(k) / c2;
                value.at(k) -= lr * mh / (std::sqrt(vh) + eps);
            }
        }
}

// ---- training loops ------------------------------------------------------

namespace {

NetSpec spec_from_config(const TrainConfig &cfg, const data::Dataset &ds) {
    if (!(cfg.rho > 0.0))
        throw InvalidParameter("train: rho must be positive");
    if (!(cfg.lr >= 0.0))
        throw InvalidParameter("train: learning rate must be nonnegative");
    if (cfg.epochs < 0 || cfg.batch_size < 1)
        throw InvalidParameter("train: bad epoch or batch settings");
    arch::ArchSpec a = arch::parse_arch(cfg.arch);
    const Mat *lq = cfg.l_q.rows() > 0 ? &cfg.l_q : nullptr;
    NetSpec spec = arch::build_netspec(a, ds.h, ds.w, ds.c, cfg.rho, cfg.act, lq, cfg.eps_gramian);
    if (cfg.l_0.rows() > 0) {
        spec.l_0 = cfg.l_0;
        nn::validate_spec(spec);
    }
    return spec;
}

void check_targets(const NetSpec &spec, const data::Dataset &ds, LossKind loss) {
    if (loss == LossKind::CrossEntropy) {
        if (!ds.classification())
            throw InvalidParameter("cross-entropy needs labeled data");
    } else if (ds.y.rows() != ds.count() || ds.y.cols() != spec.out_dim()) {
        throw ShapeMismatch("regression targets do not match the network output");
    }
}

} // namespace

MetricsRow evaluate(const PlainNetwork &net, const data::Dataset &ds, LossKind loss, int epoch,
                    const std::string &split, int chunk) {
    if (chunk < 1)
        throw InvalidParameter("evaluate: chunk must be positive");
    double loss_sum = 0.0;
    int hits = 0;
    for (int start = 0; start < ds.count(); start += chunk) {
        int nb = std::min(chunk, ds.count() - start);
        std::vector<int> idx(static_cast<size_t>(nb));
        for (int i = 0; i < nb; ++i)
            idx[static_cast<size_t>(i)] = start + i;
        data::Batch b = data::take(ds, idx);
        Mat out = nn::forward(net, b.x);
        if (loss == LossKind::CrossEntropy) {
            Tape t;
            Var lv = cross_entropy(t, t.constant(out), b.labels);
            loss_sum += t.scalar(lv) * nb;
            double acc = accuracy(out, b.labels);
            hits += static_cast<int>(std::lround(acc * nb));
        } else {
            Tape t;
            Var lv = mse(t, t.constant(out), b.y);
            loss_sum += t.scalar(lv) * nb;
        }
    }
    MetricsRow row;
    row.epoch = epoch;
    row.split = split;
    row.loss = ds.count() > 0 ? loss_sum / ds.count() : 0.0;
    row.accuracy = ds.count() > 0 ? static_cast<double>(hits) / ds.count() : 0.0;
    return row;
}

TrainResult train(const TrainConfig &cfg, const data::Dataset &train_ds,
                  const data::Dataset *eval_ds) {
    NetSpec spec = spec_from_config(cfg, train_ds);
    check_targets(spec, train_ds, cfg.loss);
    TrainResult res;
    res.net = nn::init_network(spec, cfg.seed, cfg.weight_std);
    Adam opt;
    opt.lr = cfg.lr;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.adam_eps;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        double acc_sum = 0.0;
        auto plan = data::batches(train_ds, cfg.batch_size, cfg.seed + 1000003ull * (epoch + 1));
        for (const auto &idx : plan) {
            data::Batch b = data::take(train_ds, idx);
            int nb = b.x.rows();
            Tape t;
            nn::PhiTape lifted = nn::lift_network(t, res.net);
            Var out = nn::phi_forward(t, spec, lifted.layers, t.constant(b.x), nb);
            Var loss = cfg.loss == LossKind::CrossEntropy ? cross_entropy(t, out, b.labels)
                                                          : mse(t, out, b.y);
            double lval = t.scalar(loss);
            if (!std::isfinite(lval))
                throw DivergedLoss("training loss is not finite");
            loss_sum += lval * nb;
            if (cfg.loss == LossKind::CrossEntropy)
                acc_sum += accuracy(t.val(out), b.labels) * nb;
            t.backward(loss);
            std::vector<std::map<std::string, Mat>> grads;
            grads.reserve(lifted.params.size());
            for (const auto &layer : lifted.params) {
                std::map<std::string, Mat> g;
                for (const auto &[name, var] : layer)
                    g.emplace(name, t.grad(var));
                grads.push_back(std::move(g));
            }
            opt.step(res.net.params, grads);
        }
        MetricsRow row;
        row.epoch = epoch;
        row.split = "train";
        row.loss = loss_sum / train_ds.count();
        row.accuracy = acc_sum / train_ds.count();
        res.metrics.push_back(row);
        if (eval_ds) {
            PlainNetwork plain = nn::export_plain(res.net);
            res.metrics.push_back(evaluate(plain, *eval_ds, cfg.loss, epoch, "test"));
        }
    }
    return res;
}

// ---- spectral baseline ---------------------------------------------------

namespace {

void project_spectral(Mat &w, double budget) {
    double sigma = spectral_norm(w);
    if (sigma > budget && sigma > 0.0) {
        double f = budget / sigma;
        for (size_t k = 0; k < w.size(); ++k)
            w.at(k) *= f;
    }
}

} // namespace

PlainNetwork spectral_baseline_train(const TrainConfig &cfg, const data::Dataset &train_ds,
                                     std::vector<MetricsRow> *metrics) {
    NetSpec spec = spec_from_config(cfg, train_ds);
    check_targets(spec, train_ds, cfg.loss);
    for (const auto &st : spec.stages)
        if (st.geom.kind != LayerKind::Fc && st.geom.kind != LayerKind::LastFc)
            throw InvalidSpec("spectral baseline supports dense architectures only");

    int nl = static_cast<int>(spec.stages.size());
    double budget = std::pow(cfg.rho, 1.0 / nl);
    Rng rng(cfg.seed);
    std::vector<std::map<std::string, Mat>> params;
    for (const auto &st : spec.stages) {
        int ci = st.geom.c_in, co = st.geom.c_out;
        Mat w(co, ci);
        double std = std::sqrt(2.0 / (ci + co));
        for (size_t k = 0; k < w.size(); ++k)
            w.at(k) = std * rng.normal();
        project_spectral(w, budget);
        std::map<std::string, Mat> p;
        p.emplace("W", std::move(w));
        p.emplace("b", Mat(1, co));
        params.push_back(std::move(p));
    }

    Adam opt;
    opt.lr = cfg.lr;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.adam_eps;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        double acc_sum = 0.0;
        auto plan = data::batches(train_ds, cfg.batch_size, cfg.seed + 1000003ull * (epoch + 1));
        for (const auto &idx : plan) {
            data::Batch b = data::take(train_ds, idx);
            int nb = b.x.rows();
            Tape t;
            std::vector<std::map<std::string, Var>> vars;
            for (auto &layer : params) {
                std::map<std::string, Var> lv;
                for (auto &[name, value] : layer)
                    lv.emplace(name, t.input(value));
                vars.push_back(std::move(lv));
            }
            Var cur = t.constant(b.x);
            for (int i = 0; i < nl; ++i) {
                cur = t.add_row_broadcast(t.matmul(cur, t.transpose(vars[static_cast<size_t>(i)]["W"])),
                                          vars[static_cast<size_t>(i)]["b"]);
                if (i + 1 < nl)
                    cur = spec.act == nn::Activation::Relu ? t.relu(cur) : t.tanh(cur);
            }
            Var loss = cfg.loss == LossKind::CrossEntropy ? cross_entropy(t, cur, b.labels)
                                                          : mse(t, cur, b.y);
            double lval = t.scalar(loss);
            if (!std::isfinite(lval))
                throw DivergedLoss("baseline loss is not finite");
            loss_sum += lval * nb;
            if (cfg.loss == LossKind::CrossEntropy)
                acc_sum += accuracy(t.val(cur), b.labels) * nb;
            t.backward(loss);
            std::vector<std::map<std::string, Mat>> grads;
            for (const auto &layer : vars) {
                std::map<std::string, Mat> g;
                for (const auto &[name, var] : layer)
                    g.emplace(name, t.grad(var));
                grads.push_back(std::move(g));
            }
            opt.step(params, grads);
            for (auto &layer : params)
                project_spectral(layer["W"], budget);
        }
        if (metrics) {
            MetricsRow row;
            row.epoch = epoch;
            row.split = "train";
            row.loss = loss_sum / train_ds.count();
            row.accuracy = acc_sum / train_ds.count();
            metrics->push_back(row);
        }
    }

    PlainNetwork net;
    net.spec = spec;
    for (int i = 0; i < nl; ++i) {
        layers::MaterializedLayer m;
        m.geom = spec.stages[static_cast<size_t>(i)].geom;
        m.W = params[static_cast<size_t>(i)]["W"];
        m.bias = params[static_cast<size_t>(i)]["b"];
        net.layers.push_back(std::move(m));
    }
    return net;
}

// ---- adversarial evaluation ---------------------------------------------

Mat pgd_attack(const PlainNetwork &net, const Mat &x, const std::vector<int> &labels, double eps,
               int steps, double step_size) {
    if (eps < 0.0)
        throw InvalidParameter("pgd: eps must be nonnegative");
    if (steps < 1)
        throw InvalidParameter("pgd: need at least one step");
    if (x.rows() != static_cast<int>(labels.size()))
        throw ShapeMismatch("pgd: label count mismatch");
    if (eps == 0.0)
        return x;
    double alpha = step_size > 0.0 ? step_size : 2.5 * eps / steps;
    int b = x.rows(), d = x.cols();
    Mat adv = x;
    for (int it = 0; it < steps; ++it) {
        Tape t;
        Var xv = t.input(adv);
        Var out = nn::plain_forward_tape(t, net, xv, b);
        Var loss = cross_entropy(t, out, labels);
        t.backward(loss);
        Mat g = t.grad(xv);
        for (int i = 0; i < b; ++i) {
            double n2 = 0.0;
            for (int j = 0; j < d; ++j)
                n2 += g(i, j) * g(i, j);
            double gn = std::sqrt(n2);
            if (gn < 1e-20)
                continue;
            for (int j = 0; j < d; ++j)
                adv(i, j) += alpha * g(i, j) / gn;
        }
        // project every sample back onto the eps ball around its original
        for (int i = 0; i < b; ++i) {
            double n2 = 0.0;
            for (int j = 0; j < d; ++j) {
                double dv = adv(i, j) - x(i, j);
                n2 += dv * dv;
            }
            double dn = std::sqrt(n2);
            if (dn > eps) {
                double f = eps / dn;
                for (int j = 0; j < d; ++j)
                    adv(i, j) = x(i, j) + (adv(i, j) - x(i, j)) * f;
            }
        }
    }
    return adv;
}

} // namespace lipkernel::train
