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

#include <cstdint>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lipkernel/arch.hpp"
#include "lipkernel/cert.hpp"
#include "lipkernel/data.hpp"
#include "lipkernel/errors.hpp"
#include "lipkernel/model_io.hpp"
#include "lipkernel/nn.hpp"
#include "lipkernel/train.hpp"

namespace py = pybind11;
using namespace lipkernel;
using la::Mat;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Mat mat_of(const NpArray &a) {
    py::buffer_info b = a.request();
    if (b.ndim == 1) {
        Mat m(static_cast<int>(b.shape[0]), 1);
        const double *p = static_cast<const double *>(b.ptr);
        for (int k = 0; k < m.size(); ++k)
            m.at(k) = p[k];
        return m;
    }
    if (b.ndim != 2)
        throw ShapeMismatch("expected a 1-D or 2-D array");
    Mat m(static_cast<int>(b.shape[0]), static_cast<int>(b.shape[1]));
    const double *p = static_cast<const double *>(b.ptr);
    for (int k = 0; k < m.size(); ++k)
        m.at(k) = p[k];
    return m;
}

py::array_t<double> np_of(const Mat &m) {
    py::array_t<double> a({m.rows(), m.cols()});
    double *p = static_cast<double *>(a.request().ptr);
    for (int k = 0; k < m.size(); ++k)
        p[k] = m.at(k);
    return a;
}

nn::Activation act_of(const std::string &s) {
    if (s == "relu")
        return nn::Activation::Relu;
    if (s == "tanh")
        return nn::Activation::Tanh;
    throw InvalidParameter("unknown activation: " + s);
}

struct PyModel {
    bool has_phi = false;
    nn::PhiNetwork phi;
    nn::PlainNetwork plain;
};

py::dict cert_dict(const cert::Certificate &c) {
    py::dict d;
    d["valid"] = c.valid;
    d["rho"] = c.rho;
    d["has_q"] = c.has_q;
    d["slack"] = c.slack;
    py::list rows;
    for (const auto &r : c.layers) {
        py::dict row;
        row["name"] = r.name;
        row["dim"] = r.dim;
        row["min_eig"] = r.min_eig;
        row["ok"] = r.ok;
        rows.append(row);
    }
    d["layers"] = rows;
    return d;
}

PyModel train_py(const std::string &arch, const NpArray &x, const py::object &labels,
                 const py::object &targets, double rho, int epochs, int batch,
                 std::uint64_t seed, double lr, const std::string &act, int h, int w, int c) {
    data::Dataset ds;
    ds.x = mat_of(x);
    if (h > 0 || w > 0) {
        ds.h = h > 0 ? h : 1;
        ds.w = w > 0 ? w : 1;
        ds.c = c;
    } else {
        ds.h = ds.w = 1;
        ds.c = ds.x.cols();
    }

    train::TrainConfig cfg;
    cfg.arch = arch;
    cfg.rho = rho;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.seed = seed;
    cfg.lr = lr;
    cfg.act = act_of(act);
    if (!labels.is_none()) {
        ds.labels = labels.cast<std::vector<int>>();
        cfg.loss = train::LossKind::CrossEntropy;
    } else if (!targets.is_none()) {
        ds.y = mat_of(targets.cast<NpArray>());
        cfg.loss = train::LossKind::Mse;
    } else {
        throw InvalidParameter("train needs labels or targets");
    }

    PyModel m;
    m.has_phi = true;
    m.phi = train::train(cfg, ds).net;
    m.plain = nn::export_plain(m.phi);
    return m;
}

PyModel load_py(const std::string &path) {
    io::ModelFile mf = io::load_model(path);
    PyModel m;
    if (mf.flavor == "phi") {
        m.has_phi = true;
        m.phi = io::phi_from_model(mf);
        m.plain = nn::export_plain(m.phi);
    } else if (mf.flavor == "kernel") {
        m.plain = io::plain_from_model(mf);
    } else {
        throw InvalidSpec("model flavor " + mf.flavor + " is not runnable");
    }
    return m;
}

} // namespace

PYBIND11_MODULE(_lipkernel, m) {
    m.doc() = "Convolutional networks with built-in Lipschitz bounds from dissipative state-space layers";

    py::class_<PyModel>(m, "Model")
        .def_property_readonly("arch", [](const PyModel &s) { return s.plain.spec.arch; })
        .def_property_readonly("rho", [](const PyModel &s) { return s.plain.spec.rho; })
        .def_property_readonly("in_dim", [](const PyModel &s) { return s.plain.spec.in_dim(); })
        .def_property_readonly("out_dim", [](const PyModel &s) { return s.plain.spec.out_dim(); })
        .def_property_readonly("trainable", [](const PyModel &s) { return s.has_phi; })
        .def("forward",
             [](const PyModel &s, const NpArray &x) { return np_of(nn::forward(s.plain, mat_of(x))); },
             py::arg("x"))
        .def("certify",
             [](const PyModel &s, double tol) { return cert_dict(cert::certify(s.plain, tol)); },
             py::arg("tol") = 1e-8)
        .def("empirical_lipschitz",
             [](const PyModel &s, int trials, int iters, std::uint64_t seed) {
                 return cert::empirical_lipschitz(s.plain, trials, iters, seed);
             },
             py::arg("trials") = 8, py::arg("iters") = 30, py::arg("seed") = 1)
        .def("save",
             [](const PyModel &s, const std::string &path) {
                 io::save_model(path, s.has_phi ? io::to_model(s.phi) : io::to_model(s.plain));
             },
             py::arg("path"))
        .def("export_kernel",
             [](const PyModel &s, const std::string &path) {
                 io::save_model(path, io::to_model(s.plain));
             },
             py::arg("path"));

    m.def("canonical_arch",
          [](const std::string &s) { return arch::render(arch::parse_arch(s)); }, py::arg("s"),
          "Parse an architecture string and render it back in canonical form.");

    m.def("train", &train_py, py::arg("arch"), py::arg("x"), py::arg("labels") = py::none(),
          py::arg("targets") = py::none(), py::arg("rho") = 1.0, py::arg("epochs") = 1,
          py::arg("batch") = 64, py::arg("seed") = 1, py::arg("lr") = 1e-3,
          py::arg("act") = "relu", py::arg("h") = 0, py::arg("w") = 0, py::arg("c") = 1,
          "Train a certified network; pass integer labels or float targets.");

    m.def("load_model", &load_py, py::arg("path"));

    m.def("synthetic_mnist",
          [](int n, std::uint64_t seed) {
              data::Dataset ds = data::synthetic_mnist(n, seed);
              return py::make_tuple(np_of(ds.x), ds.labels, ds.h, ds.w, ds.c);
          },
          py::arg("n"), py::arg("seed") = 1,
          "Digit-like corpus: (x, labels, h, w, c) with x flattened per row.");

    m.def("cosine_dataset",
          [](int n, std::uint64_t seed) {
              data::Dataset ds = data::cosine_dataset(n, seed);
              return py::make_tuple(np_of(ds.x), np_of(ds.y));
          },
          py::arg("n"), py::arg("seed") = 1);

    m.def("bench",
          [](const std::string &engine, int channels, int image, int kernel, int reps,
             int warmup) {
              nn::BenchSpec spec;
              spec.engine = engine == "fourier" ? nn::Engine::Fourier : nn::Engine::Kernel;
              spec.channels = channels;
              spec.image = image;
              spec.kernel = kernel;
              nn::BenchResult r = nn::bench_inference(spec, reps, warmup);
              py::dict d;
              d["engine"] = engine;
              d["avg_ms"] = r.avg_ms;
              d["std_ms"] = r.std_ms;
              d["reps"] = r.reps;
              return d;
          },
          py::arg("engine") = "kernel", py::arg("channels") = 32, py::arg("image") = 32,
          py::arg("kernel") = 3, py::arg("reps") = 20, py::arg("warmup") = 3);
}
