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

#include "lipkernel/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "lipkernel/cert.hpp"
#include "lipkernel/data.hpp"
#include "lipkernel/errors.hpp"
#include "lipkernel/model_io.hpp"
#include "lipkernel/train.hpp"

namespace lipkernel::cli {

namespace fs = std::filesystem;
using la::Mat;

namespace {

constexpr int kSynthTrain = 1000;
constexpr int kSynthTest = 200;

std::string sibling_path(const std::string &base, const char *ext) {
    return fs::path(base).replace_extension(ext).string();
}

void write_text(const std::string &path, const std::string &text) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw TruncatedFile(path + ": cannot open for writing");
    os << text;
    if (!os)
        throw TruncatedFile(path + ": short write");
}

Mat load_metric(const std::string &path) {
    io::ModelFile mf = io::load_model(path);
    if (mf.manifest.empty())
        throw InvalidSpec(path + ": metric file holds no tensor");
    return mf.get(mf.manifest.front().name);
}

data::Dataset load_split(const std::string &dir_opt, bool train_split, int limit,
                         std::ostream &out) {
    std::string dir = dir_opt.empty() ? data::default_mnist_dir() : dir_opt;
    data::Dataset ds;
    if (data::mnist_files_present(dir)) {
        ds = train_split ? data::mnist_train(dir) : data::mnist_test(dir);
    } else {
        out << "note: no MNIST files under " << dir << ", using the synthetic corpus\n";
        ds = data::synthetic_mnist(train_split ? kSynthTrain : kSynthTest,
                                   train_split ? 11u : 12u);
    }
    if (limit > 0 && limit < ds.count())
        ds = data::subset(ds, 0, limit);
    return ds;
}

nn::PlainNetwork plain_of(const io::ModelFile &mf) {
    if (mf.flavor == "phi")
        return nn::export_plain(io::phi_from_model(mf));
    if (mf.flavor == "kernel")
        return io::plain_from_model(mf);
    throw InvalidSpec("model flavor " + mf.flavor + " is not runnable");
}

nn::Activation parse_act(const std::string &s) {
    if (s == "relu")
        return nn::Activation::Relu;
    if (s == "tanh")
        return nn::Activation::Tanh;
    throw InvalidParameter("unknown activation: " + s);
}

Mat forward_chunked(const nn::PlainNetwork &net, const Mat &x, int chunk = 256) {
    Mat y;
    for (int s = 0; s < x.rows(); s += chunk) {
        int n = std::min(chunk, x.rows() - s);
        Mat xs(n, x.cols());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < x.cols(); ++j)
                xs(i, j) = x(s + i, j);
        Mat ys = nn::forward(net, xs);
        if (y.rows() == 0)
            y = Mat(x.rows(), ys.cols());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < ys.cols(); ++j)
                y(s + i, j) = ys(i, j);
    }
    return y;
}

double mean_cross_entropy(const Mat &logits, const std::vector<int> &labels) {
    double total = 0.0;
    for (int i = 0; i < logits.rows(); ++i) {
        double m = logits(i, 0);
        for (int j = 1; j < logits.cols(); ++j)
            m = std::max(m, logits(i, j));
        double lse = 0.0;
        for (int j = 0; j < logits.cols(); ++j)
            lse += std::exp(logits(i, j) - m);
        total += m + std::log(lse) - logits(i, labels[static_cast<size_t>(i)]);
    }
    return logits.rows() > 0 ? total / logits.rows() : 0.0;
}

double mean_sq_error(const Mat &pred, const Mat &target) {
    double total = 0.0;
    for (int k = 0; k < pred.size(); ++k) {
        double d = pred.at(k) - target.at(k);
        total += d * d;
    }
    return pred.size() > 0 ? total / pred.size() : 0.0;
}

} // namespace

int cmd_train(const TrainCmd &o, std::ostream &out) {
    data::Dataset train_ds = load_split(o.data_dir, true, o.limit, out);
    data::Dataset test_ds = load_split(o.data_dir, false, 0, out);

    train::TrainConfig cfg;
    cfg.arch = o.arch;
    cfg.rho = o.rho;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.seed = o.seed;
    cfg.lr = o.lr;
    cfg.act = parse_act(o.act);
    if (!o.q_file.empty())
        cfg.l_q = load_metric(o.q_file);
    if (!o.r_file.empty())
        cfg.l_0 = load_metric(o.r_file);
    if (o.loss == "auto")
        cfg.loss = train_ds.classification() ? train::LossKind::CrossEntropy
                                             : train::LossKind::Mse;
    else if (o.loss == "ce")
        cfg.loss = train::LossKind::CrossEntropy;
    else if (o.loss == "mse")
        cfg.loss = train::LossKind::Mse;
    else
        throw InvalidParameter("unknown loss: " + o.loss);

    train::TrainResult res = train::train(cfg, train_ds, &test_ds);

    io::save_model(o.out, io::to_model(res.net));
    std::string metrics_path = sibling_path(o.out, ".metrics.csv");
    write_text(metrics_path, train::metrics_csv(res.metrics));

    out << std::fixed << std::setprecision(4);
    for (const auto &row : res.metrics)
        if (row.epoch == cfg.epochs - 1 || res.metrics.size() <= 2)
            out << row.split << " loss " << row.loss << "  accuracy " << row.accuracy << "\n";
    out << "wrote " << o.out << "\n";
    out << "wrote " << metrics_path << "\n";
    return 0;
}

int cmd_certify(const CertifyCmd &o, std::ostream &out) {
    io::ModelFile mf = io::load_model(o.model);
    nn::PlainNetwork net = plain_of(mf);
    cert::Certificate c = cert::certify(net);
    if (o.kv) {
        out << c.kv_block();
    } else {
        out << "model " << o.model << " (" << mf.flavor << " form, " << mf.arch << ")\n";
        out << c.report();
    }
    return c.valid ? 0 : 1;
}

int cmd_export(const ExportCmd &o, std::ostream &out) {
    io::ModelFile mf = io::load_model(o.model);
    if (mf.flavor != "phi")
        throw InvalidSpec(o.model + ": only phi-form models can be exported");
    nn::PlainNetwork net = nn::export_plain(io::phi_from_model(mf));
    io::save_model(o.out, io::to_model(net));
    cert::Certificate c = cert::certify(net);
    std::string report_path = sibling_path(o.out, ".cert.txt");
    write_text(report_path, c.report());
    out << "wrote " << o.out << "\n";
    out << "wrote " << report_path << "\n";
    out << (c.valid ? "CERTIFIED" : "NOT CERTIFIED") << " (slack " << std::scientific
        << std::setprecision(3) << c.slack << ")\n";
    return c.valid ? 0 : 1;
}

int cmd_eval(const EvalCmd &o, std::ostream &out) {
    io::ModelFile mf = io::load_model(o.model);
    nn::PlainNetwork net = plain_of(mf);
    data::Dataset ds = load_split(o.data_dir, false, o.limit, out);

    Mat logits = forward_chunked(net, ds.x);
    out << std::fixed << std::setprecision(4);
    out << "split  samples  loss     accuracy\n";
    if (ds.classification()) {
        double acc = train::accuracy(logits, ds.labels);
        out << "test   " << std::setw(7) << std::left << ds.count() << "  "
            << mean_cross_entropy(logits, ds.labels) << "   " << acc << "\n";
        if (!o.eps.empty()) {
            if (net.spec.l_0.rows() > 0)
                throw InvalidParameter(
                    "certified accuracy needs a scalar input metric, not an r-file");
            std::vector<double> m = cert::margins(logits, ds.labels);
            out << "eps      certified\n";
            for (double e : o.eps)
                out << std::setw(7) << std::left << e << "  "
                    << cert::certified_accuracy(m, net.spec.rho, e) << "\n";
        }
    } else {
        out << "test   " << std::setw(7) << std::left << ds.count() << "  "
            << mean_sq_error(logits, ds.y) << "   -\n";
        if (!o.eps.empty())
            throw InvalidParameter("certified accuracy needs a classification dataset");
    }
    return 0;
}

int cmd_attack(const AttackCmd &o, std::ostream &out) {
    if (o.eps.empty())
        throw InvalidParameter("attack needs at least one --eps radius");
    io::ModelFile mf = io::load_model(o.model);
    nn::PlainNetwork net = plain_of(mf);
    data::Dataset ds = load_split(o.data_dir, false, o.limit, out);
    if (!ds.classification())
        throw InvalidParameter("attack needs a classification dataset");

    Mat clean_logits = forward_chunked(net, ds.x);
    out << std::fixed << std::setprecision(4);
    out << "clean accuracy " << train::accuracy(clean_logits, ds.labels) << " on " << ds.count()
        << " samples\n";
    out << "eps      adversarial\n";
    for (double e : o.eps) {
        Mat adv = train::pgd_attack(net, ds.x, ds.labels, e, o.steps);
        Mat adv_logits = forward_chunked(net, adv);
        out << std::setw(7) << std::left << e << "  "
            << train::accuracy(adv_logits, ds.labels) << "\n";
    }
    return 0;
}

int cmd_bench(const BenchCmd &o, std::ostream &out) {
    std::vector<nn::Engine> engines;
    if (o.engine == "kernel")
        engines = {nn::Engine::Kernel};
    else if (o.engine == "fourier")
        engines = {nn::Engine::Fourier};
    else if (o.engine == "both")
        engines = {nn::Engine::Kernel, nn::Engine::Fourier};
    else
        throw InvalidParameter("unknown engine: " + o.engine);

    std::ostringstream csv;
    csv << nn::kBenchCsvHeader << "\n";
    for (nn::Engine e : engines) {
        nn::BenchSpec spec{e, o.channels, o.image, o.kernel, o.batch};
        csv << nn::bench_inference(spec, o.reps, o.warmup).csv_row() << "\n";
    }
    out << csv.str();
    if (!o.out.empty()) {
        write_text(o.out, csv.str());
        out << "wrote " << o.out << "\n";
    }
    return 0;
}

int cmd_fit_cosine(const FitCosineCmd &o, std::ostream &out) {
    data::Dataset ds = data::cosine_dataset(o.samples, o.seed);

    train::TrainConfig cfg;
    cfg.arch = "f(2).f(1)";
    cfg.rho = 1.0;
    cfg.act = nn::Activation::Tanh;
    cfg.loss = train::LossKind::Mse;
    cfg.lr = o.lr;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.seed = o.seed;

    nn::PlainNetwork ours = nn::export_plain(train::train(cfg, ds).net);
    nn::PlainNetwork baseline = train::spectral_baseline_train(cfg, ds);

    const int grid = 201;
    Mat xs(grid, 1), target(grid, 1);
    for (int i = 0; i < grid; ++i) {
        xs(i, 0) = -1.5707963267948966 + 3.141592653589793 * i / (grid - 1);
        target(i, 0) = std::cos(xs(i, 0));
    }
    Mat ours_y = nn::forward(ours, xs);
    Mat base_y = nn::forward(baseline, xs);

    std::ostringstream csv;
    csv << "x,target,lipkernel,spectral\n";
    csv << std::setprecision(17);
    for (int i = 0; i < grid; ++i)
        csv << xs(i, 0) << "," << target(i, 0) << "," << ours_y(i, 0) << "," << base_y(i, 0)
            << "\n";
    write_text(o.out, csv.str());

    double ours_mse = mean_sq_error(nn::forward(ours, ds.x), ds.y);
    double base_mse = mean_sq_error(nn::forward(baseline, ds.x), ds.y);
    out << std::scientific << std::setprecision(4);
    out << "lipkernel mse " << ours_mse << "\n";
    out << "spectral baseline mse " << base_mse << "\n";
    out << "wrote " << o.out << "\n";
    return 0;
}

int dispatch(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Convolutional networks with built-in Lipschitz bounds from dissipative state-space layers"};
    app.require_subcommand(1);

    TrainCmd tr;
    auto *c_tr = app.add_subcommand("train", "train a network, write the phi-form model");
    c_tr->add_option("--arch", tr.arch, "architecture string, e.g. c(16,4,2).f(10)")->required();
    c_tr->add_option("--rho", tr.rho, "Lipschitz bound");
    c_tr->add_option("--q-file", tr.q_file, "output metric factor tensor file");
    c_tr->add_option("--r-file", tr.r_file, "input metric factor tensor file");
    c_tr->add_option("--epochs", tr.epochs);
    c_tr->add_option("--batch", tr.batch);
    c_tr->add_option("--seed", tr.seed);
    c_tr->add_option("--data-dir", tr.data_dir, "IDX data directory");
    c_tr->add_option("--out", tr.out, "model file destination");
    c_tr->add_option("--lr", tr.lr);
    c_tr->add_option("--limit", tr.limit, "training sample cap, 0 = all");
    c_tr->add_option("--act", tr.act, "relu or tanh");
    c_tr->add_option("--loss", tr.loss, "auto, ce or mse");

    CertifyCmd ce;
    auto *c_ce = app.add_subcommand("certify", "check every layer condition of a model");
    c_ce->add_option("model", ce.model, "model file")->required();
    c_ce->add_flag("--kv", ce.kv, "machine-readable output");

    ExportCmd ex;
    auto *c_ex = app.add_subcommand("export", "materialize a phi-form model to kernel form");
    c_ex->add_option("model", ex.model, "phi-form model file")->required();
    c_ex->add_option("--out", ex.out, "kernel-form destination");

    EvalCmd ev;
    auto *c_ev = app.add_subcommand("eval", "accuracy of a model on the test split");
    c_ev->add_option("model", ev.model, "model file")->required();
    c_ev->add_option("--data-dir", ev.data_dir);
    c_ev->add_option("--eps", ev.eps, "certified-accuracy radii");
    c_ev->add_option("--limit", ev.limit, "sample cap, 0 = all");

    AttackCmd at;
    auto *c_at = app.add_subcommand("attack", "projected gradient attack accuracy");
    c_at->add_option("model", at.model, "model file")->required();
    c_at->add_option("--data-dir", at.data_dir);
    c_at->add_option("--eps", at.eps, "perturbation radii")->required();
    c_at->add_option("--steps", at.steps);
    c_at->add_option("--limit", at.limit, "sample cap, 0 = all");
    c_at->add_option("--seed", at.seed);

    BenchCmd be;
    auto *c_be = app.add_subcommand("bench", "inference timing CSV");
    c_be->add_option("--engine", be.engine, "kernel, fourier or both");
    c_be->add_option("--reps", be.reps);
    c_be->add_option("--warmup", be.warmup);
    c_be->add_option("--channels", be.channels);
    c_be->add_option("--image", be.image);
    c_be->add_option("--kernel", be.kernel);
    c_be->add_option("--batch", be.batch);
    c_be->add_option("--out", be.out, "also write the CSV here");

    FitCosineCmd fc;
    auto *c_fc = app.add_subcommand("fit-cosine", "cosine regression comparison CSV");
    c_fc->add_option("--out", fc.out, "prediction CSV destination");
    c_fc->add_option("--seed", fc.seed);
    c_fc->add_option("--epochs", fc.epochs);
    c_fc->add_option("--batch", fc.batch);
    c_fc->add_option("--samples", fc.samples);
    c_fc->add_option("--lr", fc.lr);

    int rc = 0;
    c_tr->callback([&] { rc = cmd_train(tr, out); });
    c_ce->callback([&] { rc = cmd_certify(ce, out); });
    c_ex->callback([&] { rc = cmd_export(ex, out); });
    c_ev->callback([&] { rc = cmd_eval(ev, out); });
    c_at->callback([&] { rc = cmd_attack(at, out); });
    c_be->callback([&] { rc = cmd_bench(be, out); });
    c_fc->callback([&] { rc = cmd_fit_cosine(fc, out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e, out, err);
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

} // namespace lipkernel::cli
