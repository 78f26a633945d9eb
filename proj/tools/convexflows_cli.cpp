// convexflows command-line front end: solve, generate, check, bench.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "convexflows/convexflows.hpp"

namespace cf = convexflows;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUnsolved = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cf::Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw cf::Error("cannot write " + path);
  out << text << '\n';
}

int run_solve(const std::string& file, const std::string& trace_path,
              const std::string& out_path, cf::SolverConfig cfg) {
  const cf::ProblemInstance inst = cf::parse_instance(read_file(file));
  const cf::SolveResult r = cf::solve(inst, cfg);
  if (!trace_path.empty()) {
    std::ofstream t(trace_path);
    if (!t) throw cf::Error("cannot write " + trace_path);
    r.trace.write_csv(t);
  }
  if (!out_path.empty()) write_file(out_path, cf::serialize_result(cf::result_file(r)));
  std::cout.precision(12);
  std::cout << "status        " << r.status << '\n'
            << "iterations    " << r.iterations << '\n'
            << "dual value    " << r.dual_value << '\n'
            << "primal value  " << r.primal_value << '\n'
            << "relative gap  " << r.relative_gap << '\n';
  if (r.recovery_used) std::cout << "recovery res. " << r.recovery_residual << '\n';
  return r.solved ? 0 : kExitUnsolved;
}

int run_generate(const std::string& kind, std::size_t size, std::uint64_t seed,
                 double density, bool penalty, const std::string& out_path) {
  cf::ProblemInstance inst = [&] {
    if (kind == "opf") return cf::gen_opf(size, seed);
    if (kind == "cfmm") return cf::gen_cfmm(size, seed, penalty);
    return cf::gen_maxflow(size, density, seed);
  }();
  write_file(out_path, cf::serialize_instance(inst));
  std::cout << "wrote " << out_path << ": n=" << inst.num_nodes() << " m=" << inst.num_edges()
            << '\n';
  return 0;
}

int run_check(const std::string& file, const std::string& result_path, double tol) {
  const cf::ProblemInstance inst = cf::parse_instance(read_file(file));
  const cf::ResultFile res = cf::parse_result(read_file(result_path));
  const cf::CheckReport rep = cf::check_result(inst, res, tol);
  std::cout.precision(12);
  std::cout << "net flow mismatch  " << rep.net_flow_mismatch << '\n'
            << "non-member flows   " << rep.non_members << '\n'
            << "primal value       " << rep.primal_value << '\n'
            << "dual value         " << rep.dual_value << '\n'
            << "relative gap       " << rep.relative_gap << '\n';
  for (const std::string& p : rep.problems) std::cout << "FAIL: " << p << '\n';
  std::cout << (rep.ok ? "result OK" : "result REJECTED") << '\n';
  return rep.ok ? 0 : kExitError;
}

int run_bench(const std::string& kind, const std::vector<std::size_t>& sizes, int trials,
              const std::string& out_path, const cf::SolverConfig& cfg) {
  const auto rows = cf::run_bench(kind, sizes, trials, cfg);
  std::ofstream out(out_path);
  if (!out) throw cf::Error("cannot write " + out_path);
  cf::write_bench_csv(out, rows);
  for (std::size_t s : sizes) {
    std::cout << kind << " size " << s << ": median " << cf::median_time(rows, s) << " s\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex flow problems over hypergraphs, solved through the dual"};
  app.require_subcommand(1);

  cf::SolverConfig cfg;
  auto add_solver_opts = [&](CLI::App* sub) {
    sub->add_option("--tol", cfg.grad_tol, "relative projected-gradient tolerance")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", cfg.max_iter, "iteration limit")->check(CLI::PositiveNumber);
    sub->add_option("--threads", cfg.threads, "edge-evaluation workers")
        ->check(CLI::PositiveNumber);
  };

  std::string file, trace_path, out_path, result_path, kind;
  auto* solve = app.add_subcommand("solve", "solve an instance file");
  solve->add_option("file", file, "instance file")->required()->check(CLI::ExistingFile);
  solve->add_option("--trace", trace_path, "write the convergence trace as CSV");
  solve->add_option("--out", out_path, "write the result file");
  add_solver_opts(solve);

  std::size_t size = 0;
  std::uint64_t seed = 0;
  double density = 0.3;
  bool penalty = false;
  auto* gen = app.add_subcommand("generate", "write a random instance");
  gen->add_option("kind", kind, "opf | cfmm | maxflow")
      ->required()
      ->check(CLI::IsMember({"opf", "cfmm", "maxflow"}));
  gen->add_option("--size", size, "nodes (opf, maxflow) or pools (cfmm)")->required();
  gen->add_option("--seed", seed, "random seed");
  gen->add_option("--density", density, "arc probability for maxflow");
  gen->add_flag("--penalty", penalty, "quadratic penalty on every cfmm pool");
  gen->add_option("-o,--out", out_path, "output file")->required();

  double check_tol = 1e-6;
  auto* check = app.add_subcommand("check", "verify a result file against its instance");
  check->add_option("file", file, "instance file")->required()->check(CLI::ExistingFile);
  check->add_option("result", result_path, "result file")->required()->check(CLI::ExistingFile);
  check->add_option("--tol", check_tol, "feasibility and gap tolerance")
      ->check(CLI::PositiveNumber);

  std::vector<std::size_t> sizes;
  int trials = 10;
  auto* bench = app.add_subcommand("bench", "time solves over generated instances");
  bench->add_option("kind", kind, "opf | cfmm")->required()->check(CLI::IsMember({"opf", "cfmm"}));
  bench->add_option("--sizes", sizes, "comma-separated sizes")->required()->delimiter(',');
  bench->add_option("--trials", trials, "trials per size")->check(CLI::PositiveNumber);
  bench->add_option("-o,--out", out_path, "output CSV")->required();
  add_solver_opts(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version exit 0; every usage error maps to the one error code.
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*solve) return run_solve(file, trace_path, out_path, cfg);
    if (*gen) return run_generate(kind, size, seed, density, penalty, out_path);
    if (*check) return run_check(file, result_path, check_tol);
    if (*bench) return run_bench(kind, sizes, trials, out_path, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
