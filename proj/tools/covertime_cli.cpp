// Command-line front door: every subcommand echoes its resolved configuration,
// runs one experiment or computation, and writes results only under --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "covertime/exact.hpp"
#include "covertime/experiments.hpp"
#include "covertime/gff.hpp"
#include "covertime/lattice.hpp"
#include "covertime/walk.hpp"

namespace lat = covertime::lattice;
namespace exp_ = covertime::experiments;
using nlohmann::json;

namespace {

lat::DomainShape parse_domain(const std::string& spec) {
  if (spec == "square") return lat::DomainShape::unit_square();
  if (spec == "disc") return lat::DomainShape::unit_disc();
  if (spec.rfind("annulus:", 0) == 0) {
    const double inner = std::stod(spec.substr(8));
    return lat::DomainShape::annulus(inner);
  }
  if (spec.rfind("polygon:", 0) == 0) {
    const std::string path = spec.substr(8);
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--domain", "cannot open polygon file " + path);
    std::vector<std::array<double, 2>> vs;
    double x, y;
    while (in >> x >> y) vs.push_back({x, y});
    if (vs.size() < 3)
      throw CLI::ValidationError("--domain", "polygon file needs at least 3 'x y' lines");
    return lat::DomainShape::polygon(std::move(vs));
  }
  throw CLI::ValidationError("--domain",
                             "expected square | disc | annulus:R | polygon:FILE, got " + spec);
}

struct CommonOptions {
  std::string domain = "square";
  double n = 5.0;
  std::string rate = "1";
  std::size_t replicas = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "json";
  double t = 2.0;
  double u = 0.0;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool needs_n = true) {
  cmd->add_option("--domain", opt.domain, "domain: square | disc | annulus:R | polygon:FILE")
      ->capture_default_str();
  auto* n_opt = cmd->add_option("--n", opt.n, "log side scale n (N = floor(e^n))");
  if (needs_n) n_opt->required();
  cmd->add_option("--rate", opt.rate, "edge rate convention: 1 | retuned (= 1/(2 pi))")
      ->check(CLI::IsMember({"1", "retuned"}))
      ->capture_default_str();
  cmd->add_option("--replicas", opt.replicas, "number of replicas")->capture_default_str();
  cmd->add_option("--seed", opt.seed, "base RNG seed")->capture_default_str();
  cmd->add_option("--out", opt.out, "output directory (records + summary + manifest)");
  cmd->add_option("--format", opt.format, "summary format: json | csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
}

exp_::ExperimentConfig to_config(const CommonOptions& opt, const std::string& id) {
  exp_::ExperimentConfig cfg;
  cfg.experiment = id;
  cfg.shape = parse_domain(opt.domain);
  cfg.n_grid = {opt.n};
  cfg.rate_convention = opt.rate;
  cfg.replicas = opt.replicas;
  cfg.seed = opt.seed;
  cfg.out_path = opt.out;
  cfg.format = opt.format;
  cfg.t = opt.t;
  cfg.u = opt.u;
  return cfg;
}

void echo_config(const json& cfg) { std::cout << "config " << cfg.dump() << "\n"; }

int finish(const exp_::ResultRecord& rec, const CommonOptions& opt) {
  if (!opt.out.empty()) {
    const auto man = exp_::persist(rec, opt.out, opt.format);
    std::cout << "manifest " << man.manifest_path << "\n";
  }
  std::cout << "summary " << rec.summary.dump() << "\n";
  return 0;
}

std::string csv_line(std::initializer_list<std::string> fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += ",";
    out += exp_::csv_quote(f);
    first = false;
  }
  return out + "\r\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covertime: cover times, local times and the Gaussian free field on wired planar domains"};
  app.require_subcommand(1);

  CommonOptions opt;

  // green: exact Green matrix of the wired domain
  auto* green_cmd = app.add_subcommand("green", "exact Green matrix on the wired domain");
  add_common(green_cmd, opt);
  green_cmd->callback([&] {
    const auto shape = parse_domain(opt.domain);
    const auto domain = lat::discretize_domain(shape, opt.n);
    const auto graph = lat::wire_boundary(domain);
    const double rate = opt.rate == "retuned" ? exp_::kRetunedRate : 1.0;
    json cfg = {{"subcommand", "green"}, {"domain", shape.name()},  {"n", opt.n},
                {"N", domain.N},         {"vertex_count", domain.size()}, {"rate", opt.rate},
                {"seed", opt.seed}};
    echo_config(cfg);
    const auto green = covertime::exact::green_matrix(graph, rate);
    json summary = {{"interior", green.size()},
                    {"symmetry_residual", green.symmetry_residual()},
                    {"diag_min", green.values().diagonal().minCoeff()},
                    {"diag_max", green.values().diagonal().maxCoeff()}};
    if (!opt.out.empty()) {
      std::filesystem::create_directories(opt.out);
      const auto matrix_path = std::filesystem::path(opt.out) / "green.csv";
      std::ofstream mat(matrix_path, std::ios::binary);
      mat.precision(17);
      for (Eigen::Index i = 0; i < green.values().rows(); ++i) {
        for (Eigen::Index j = 0; j < green.values().cols(); ++j)
          mat << (j ? "," : "") << green.values()(i, j);
        mat << "\r\n";
      }
      const auto desc_path = std::filesystem::path(opt.out) / "domain.json";
      std::ofstream desc(desc_path, std::ios::binary);
      desc << json({{"shape", shape.name()}, {"n", opt.n}, {"vertex_count", domain.size()}})
                  .dump(2)
           << "\n";
      summary["matrix_csv"] = matrix_path.string();
    }
    std::cout << "summary " << summary.dump() << "\n";
  });

  // gff-sample: DGFF samples as CSV (x, y, value)
  auto* gff_cmd = app.add_subcommand("gff-sample", "sample the DGFF on the wired domain");
  add_common(gff_cmd, opt);
  gff_cmd->callback([&] {
    const auto shape = parse_domain(opt.domain);
    const auto domain = lat::discretize_domain(shape, opt.n);
    const auto graph = lat::wire_boundary(domain);
    const double rate = opt.rate == "retuned" ? exp_::kRetunedRate : 1.0;
    json cfg = {{"subcommand", "gff-sample"}, {"domain", shape.name()}, {"n", opt.n},
                {"rate", opt.rate},           {"replicas", opt.replicas}, {"seed", opt.seed}};
    echo_config(cfg);
    const auto green = covertime::exact::green_matrix(graph, rate);
    const covertime::gff::CovarianceFactor factor(green);
    double mean_avg = 0.0;
    for (std::size_t r = 0; r < opt.replicas; ++r) {
      const auto h = covertime::gff::sample_dgff(factor, opt.seed, r);
      mean_avg += h.average;
      if (!opt.out.empty()) {
        std::filesystem::create_directories(opt.out);
        char name[64];
        std::snprintf(name, sizeof(name), "field_%04zu.csv", r);
        std::ofstream out(std::filesystem::path(opt.out) / name, std::ios::binary);
        out << csv_line({"x", "y", "value"});
        for (std::uint32_t i = 0; i < graph.interior_count(); ++i) {
          const auto v = graph.coord(i);
          out << v.x << "," << v.y << "," << h.values[i] << "\r\n";
        }
      }
    }
    std::cout << "summary "
              << json({{"replicas", opt.replicas},
                       {"mean_field_average", mean_avg / static_cast<double>(opt.replicas)}})
                     .dump()
              << "\n";
  });

  // extremes: extremal process of a sampled field, JSON lines
  double extremes_r = -1.0;
  auto* ext_cmd = app.add_subcommand("extremes", "extremal process of sampled DGFF replicas");
  add_common(ext_cmd, opt);
  ext_cmd->add_option("--r", extremes_r, "local-minimum log radius (default n^0.4)");
  ext_cmd->callback([&] {
    const auto shape = parse_domain(opt.domain);
    const auto domain = lat::discretize_domain(shape, opt.n);
    const auto graph = lat::wire_boundary(domain);
    const double rate = opt.rate == "retuned" ? exp_::kRetunedRate : 1.0;
    const double r = extremes_r >= 0.0 ? extremes_r : std::pow(opt.n, 0.4);
    const double centering =
        opt.rate == "retuned"
            ? covertime::gff::eval_centering(opt.n, covertime::gff::Centering::retuned_mn)
            : covertime::gff::eval_centering(static_cast<double>(domain.N),
                                             covertime::gff::Centering::intro_mn);
    json cfg = {{"subcommand", "extremes"}, {"domain", shape.name()}, {"n", opt.n},
                {"rate", opt.rate},         {"replicas", opt.replicas}, {"seed", opt.seed},
                {"r", r},                   {"centering", centering}};
    echo_config(cfg);
    const auto green = covertime::exact::green_matrix(graph, rate);
    const covertime::gff::CovarianceFactor factor(green);
    std::size_t total_points = 0;
    std::ofstream out;
    if (!opt.out.empty()) {
      std::filesystem::create_directories(opt.out);
      out.open(std::filesystem::path(opt.out) / "extremes.jsonl", std::ios::binary);
    }
    for (std::size_t rep = 0; rep < opt.replicas; ++rep) {
      const auto h = covertime::gff::sample_dgff(factor, opt.seed, rep);
      auto pts = covertime::gff::extremal_process(h, r, std::log(4.0), centering);
      covertime::gff::scale_extremal_positions(pts, opt.n);
      total_points += pts.size();
      if (out) {
        for (const auto& p : pts) {
          json patch = json::array();
          for (const auto& [off, rel] : p.patch)
            patch.push_back({{"dx", off.x}, {"dy", off.y}, {"rel", rel}});
          out << json({{"replica", rep},
                       {"pos", {p.pos_x, p.pos_y}},
                       {"depth", p.depth},
                       {"patch", patch}})
                     .dump()
              << "\n";
        }
      }
    }
    std::cout << "summary "
              << json({{"replicas", opt.replicas}, {"total_points", total_points}}).dump()
              << "\n";
  });

  // cover
  bool overlay = false;
  auto* cover_cmd = app.add_subcommand("cover", "cover-time fluctuations and last visited vertex");
  add_common(cover_cmd, opt);
  cover_cmd->add_flag("--overlay", overlay, "fit the limiting mixture CDF (labeled FIT)");
  cover_cmd->callback([&] {
    auto cfg = to_config(opt, "cover");
    cfg.overlay = overlay;
    echo_config(cfg.to_json());
    return finish(exp_::run_cover_time_experiment(cfg), opt);
  });

  // phase-a
  auto* pa_cmd = app.add_subcommand("phase-a", "phase-A vacant-set statistics at t_n^A");
  add_common(pa_cmd, opt);
  pa_cmd->callback([&] {
    auto cfg = to_config(opt, "phase-a");
    if (cfg.rate_convention.empty()) cfg.rate_convention = "retuned";
    echo_config(cfg.to_json());
    return finish(exp_::run_phase_a_experiment(cfg), opt);
  });

  // phase-b-race
  std::size_t planted = 1;
  auto* pb_cmd = app.add_subcommand("phase-b-race", "phase-B cover race on a planted set");
  add_common(pb_cmd, opt);
  pb_cmd->add_option("--planted", planted, "number of planted targets")->capture_default_str();
  pb_cmd->callback([&] {
    auto cfg = to_config(opt, "phase-b-race");
    cfg.planted_count = planted;
    echo_config(cfg.to_json());
    const auto domain = lat::discretize_domain(cfg.shape, cfg.n_grid.front());
    const auto set = exp_::default_planted_set(domain, planted);
    return finish(exp_::run_phase_b_race_experiment(cfg, set), opt);
  });

  // ray-knight
  auto* rk_cmd = app.add_subcommand("ray-knight", "isomorphism law checks on square blocks");
  add_common(rk_cmd, opt, /*needs_n=*/false);
  rk_cmd->add_option("--t", opt.t, "boundary time of the coupling")->capture_default_str();
  rk_cmd->callback([&] {
    auto cfg = to_config(opt, "ray-knight");
    echo_config(cfg.to_json());
    return finish(exp_::run_isomorphism_suite(cfg), opt);
  });

  // onedim-laws
  auto* od_cmd = app.add_subcommand("onedim-laws", "1D walk conditional-law suite");
  add_common(od_cmd, opt, /*needs_n=*/false);
  od_cmd->callback([&] {
    auto cfg = to_config(opt, "onedim-laws");
    echo_config(cfg.to_json());
    return finish(exp_::run_onedim_laws_suite(cfg), opt);
  });

  // ballot
  auto* ballot_cmd = app.add_subcommand("ballot", "ballot-rate diagnostic trend table");
  add_common(ballot_cmd, opt, /*needs_n=*/false);
  ballot_cmd->callback([&] {
    auto cfg = to_config(opt, "ballot");
    echo_config(cfg.to_json());
    return finish(exp_::run_ballot_diagnostic(cfg), opt);
  });

  // race: closed form against direct two-stage Poisson simulation
  double race_p = 0.05, race_q = 0.1;
  auto* race_cmd = app.add_subcommand("race", "two-stage excursion race: formula vs simulation");
  add_common(race_cmd, opt, /*needs_n=*/false);
  race_cmd->add_option("--t", opt.t, "Poisson intensity tau")->capture_default_str();
  race_cmd->add_option("--p", race_p, "first-stage success probability")->capture_default_str();
  race_cmd->add_option("--q", race_q, "second-stage failure probability")->capture_default_str();
  race_cmd->callback([&] {
    json cfg = {{"subcommand", "race"}, {"tau", opt.t},  {"p", race_p},
                {"q", race_q},          {"replicas", opt.replicas}, {"seed", opt.seed}};
    echo_config(cfg);
    const double formula = covertime::exact::two_stage_race_probability(opt.t, race_p, race_q);
    covertime::RngStream rng(opt.seed, covertime::RngUse::generic, 0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < opt.replicas; ++i) {
      const auto experiments = rng.poisson(opt.t);
      bool partial = false, full = false;
      for (std::uint64_t e = 0; e < experiments; ++e)
        if (rng.uniform() <= race_p) {
          if (rng.uniform() <= race_q)
            partial = true;
          else
            full = true;
        }
      hits += (partial && !full) ? 1 : 0;
    }
    const double freq = static_cast<double>(hits) / static_cast<double>(opt.replicas);
    const double se = std::sqrt(formula * (1.0 - formula) / static_cast<double>(opt.replicas));
    std::cout << "summary "
              << json({{"formula", formula},
                       {"simulated", freq},
                       {"standard_error", se},
                       {"within_3_se", std::fabs(freq - formula) <= 3.0 * se}})
                     .dump()
              << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n"
              << "remedy: run '" << (argv[0] ? argv[0] : "covertime")
              << " --help' for the full flag table\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
