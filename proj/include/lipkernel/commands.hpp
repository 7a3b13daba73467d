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

#ifndef LIPKERNEL_COMMANDS_HPP
#define LIPKERNEL_COMMANDS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lipkernel::cli {

/*
 * Each command is a plain function over an options struct so tests can call
 * them without re-parsing argv. dispatch() wires them to the real CLI.
 * Commands return a process exit code and write their report to `out`;
 * failures surface as exceptions and are turned into exit code 1 by
 * dispatch().
 */

struct TrainCmd {
    std::string arch;
    double rho = 1.0;
    std::string q_file, r_file; // metric factor tensor files
    int epochs = 3;
    int batch = 64;
    std::uint64_t seed = 1;
    std::string data_dir; // empty selects the default location
    std::string out = "model.lpkn";
    double lr = 1e-3;
    int limit = 0; // cap on training samples, 0 = all
    std::string act = "relu";
    std::string loss = "auto"; // auto, ce, mse
};

struct CertifyCmd {
    std::string model;
    bool kv = false; // machine-readable key=value block instead of the table
};

struct ExportCmd {
    std::string model;
    std::string out = "exported.lpkn";
};

struct EvalCmd {
    std::string model;
    std::string data_dir;
    std::vector<double> eps; // certified-accuracy radii
    int limit = 0;
};

struct AttackCmd {
    std::string model;
    std::string data_dir;
    std::vector<double> eps;
    int steps = 10;
    int limit = 128;
    std::uint64_t seed = 1;
};

struct BenchCmd {
    std::string engine = "both"; // kernel, fourier, both
    int reps = 50;
    int warmup = 5;
    int channels = 32;
    int image = 32;
    int kernel = 3;
    int batch = 1;
    std::string out; // optional CSV destination
};

struct FitCosineCmd {
    std::string out = "cosine.csv";
    std::uint64_t seed = 3;
    int epochs = 150;
    int batch = 25;
    int samples = 200;
    double lr = 1e-2;
};

int cmd_train(const TrainCmd &o, std::ostream &out);
int cmd_certify(const CertifyCmd &o, std::ostream &out);
int cmd_export(const ExportCmd &o, std::ostream &out);
int cmd_eval(const EvalCmd &o, std::ostream &out);
int cmd_attack(const AttackCmd &o, std::ostream &out);
int cmd_bench(const BenchCmd &o, std::ostream &out);
int cmd_fit_cosine(const FitCosineCmd &o, std::ostream &out);

/** Full argv path: parse flags, run the command, map errors to exit 1. */
int dispatch(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace lipkernel::cli

#endif
