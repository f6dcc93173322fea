// deff: command-line front end for the data-efficiency toolkit.
//
// Exit codes: 0 success, 1 data error, 2 usage error, 3 partial protocol
// failure (some runs failed).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deff/deff.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw deff::Error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw deff::Error("cannot write '" + path.string() + "'");
  out << text;
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw deff::Error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

deff::CorpusTable load_tables(const std::vector<std::string>& paths) {
  std::vector<fs::path> files(paths.begin(), paths.end());
  return deff::load_corpus(files);
}

// Points come from a ledger JSON, a JSON array of points, or a CSV with
// columns subset_percent,exact_match[,seed,model_id,domain].
std::vector<deff::EfficiencyPoint> load_points(const fs::path& path) {
  if (path.extension() == ".csv") {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<deff::EfficiencyPoint> points;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line_no == 1 && line.starts_with("subset_percent")) continue;
      std::vector<std::string> cols;
      std::stringstream ls(line);
      std::string col;
      while (std::getline(ls, col, ',')) cols.push_back(col);
      if (cols.size() < 2) {
        throw deff::CorpusError(path.string(), line_no, "expected subset_percent,exact_match");
      }
      deff::EfficiencyPoint p;
      try {
        p.subset_percent = std::stod(cols[0]);
        p.exact_match = std::stod(cols[1]);
        if (cols.size() > 2) p.seed = std::stoll(cols[2]);
      } catch (const std::exception&) {
        throw deff::CorpusError(path.string(), line_no, "non-numeric value");
      }
      if (cols.size() > 3) p.model_id = cols[3];
      if (cols.size() > 4) p.domain = cols[4];
      points.push_back(std::move(p));
    }
    return points;
  }
  const json j = parse_json_file(path);
  try {
    if (j.is_object() && j.contains("entries")) {
      return deff::ledger_to_curve(j.get<deff::Ledger>());
    }
    return j.get<std::vector<deff::EfficiencyPoint>>();
  } catch (const json::exception& e) {
    throw deff::Error("'" + path.string() + "' holds no efficiency points: " + e.what());
  }
}

deff::CurveModel load_model(const fs::path& path) {
  try {
    return parse_json_file(path).get<deff::CurveModel>();
  } catch (const json::exception& e) {
    throw deff::Error("'" + path.string() + "' is not a curve model: " + e.what());
  }
}

deff::CurveParams parse_params(const std::vector<double>& v) {
  if (v.size() != 3) throw CLI::ValidationError("expected three values a,b,c");
  return {v[0], v[1], v[2]};
}

std::vector<deff::Frame> read_frames(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<deff::Frame> frames;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      frames.push_back(deff::parse_frame(line));
    } catch (const deff::FrameParseError& e) {
      throw deff::CorpusError(path.string(), line_no, e.what());
    }
  }
  return frames;
}

std::string format_query(const deff::CurveModel& model, double y) {
  std::string out = deff::format_percent(y) + "\t";
  try {
    const auto inv = deff::invert(model, y);
    out += deff::format_percent(inv.subset_percent, 4);
    if (inv.exceeds_full_data) out += "\texceeds full data (not achievable within 100% of target data)";
  } catch (const deff::UnreachableTarget& e) {
    out += "unreachable (asymptote " + deff::format_percent(e.asymptote()) + ")";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-efficiency curves for task-oriented semantic parsers"};
  app.require_subcommand(1);

  // schedule
  int schedule_n = 10;
  auto* schedule = app.add_subcommand("schedule", "Print the logarithmic subset-size schedule");
  schedule->add_option("--n", schedule_n, "Number of subsets, including 0% and 100%")
      ->check(CLI::Range(2, 1000000));

  // sample
  std::vector<std::string> sample_corpus;
  std::string sample_domain, sample_algorithm = "uniform", sample_out;
  double sample_size = 0;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "Draw a target-domain subset");
  sample->add_option("--corpus", sample_corpus, "Corpus TSV/JSONL file(s)")->required();
  sample->add_option("--domain", sample_domain, "Target domain")->required();
  sample->add_option("--algorithm", sample_algorithm)->check(CLI::IsMember({"uniform", "spis"}));
  sample->add_option("--size", sample_size, "Percent (uniform) or min occurrences (spis)")->required();
  sample->add_option("--seed", sample_seed);
  sample->add_option("--out", sample_out, "Subset JSON output")->required();

  // fit
  std::string fit_points, fit_out;
  bool fit_average = false;
  auto* fit = app.add_subcommand("fit", "Fit h(x) = a/x^b + c to efficiency points");
  fit->add_option("--points", fit_points, "Ledger JSON, points JSON, or points CSV")->required();
  fit->add_option("--out", fit_out, "Curve model JSON output (stdout if omitted)");
  fit->add_flag("--average", fit_average, "Average repeated subset sizes before fitting");

  // query
  std::string query_model;
  std::vector<double> query_params, query_em;
  auto* query = app.add_subcommand("query", "Subset percent required for EM targets");
  auto* query_model_opt = query->add_option("--model", query_model, "Curve model JSON");
  query->add_option("--params", query_params, "Curve parameters a,b,c")
      ->delimiter(',')
      ->excludes(query_model_opt);
  query->add_option("--em", query_em, "Exact-match targets")->required();

  // run
  std::vector<std::string> run_corpus;
  std::string run_target, run_runner = "simulate", run_out, run_model_id = "model",
                          run_algorithm = "uniform", run_work_dir, run_points_out;
  std::vector<std::uint64_t> run_seeds{0};
  std::vector<double> run_sizes, run_truth{-27.26, 0.35, 97.79};
  int run_n = 10;
  double run_sigma = 0.0, run_em_at_zero = 0.0;
  std::uint64_t run_sim_seed = 0;
  unsigned run_jobs = 1;
  bool run_predictions = false;
  auto* run = app.add_subcommand("run", "Build manifests, execute them, and write the ledger");
  run->add_option("--corpus", run_corpus, "Corpus TSV/JSONL file(s)")->required();
  run->add_option("--target", run_target, "Target domain")->required();
  run->add_option("--runner", run_runner, "simulate | exec:COMMAND");
  run->add_option("--seeds", run_seeds, "Subset seeds")->delimiter(',');
  run->add_option("--out", run_out, "Ledger JSON output")->required();
  run->add_option("--model-id", run_model_id);
  run->add_option("--algorithm", run_algorithm)->check(CLI::IsMember({"uniform", "spis"}));
  run->add_option("--n", run_n, "Schedule length (uniform)")->check(CLI::Range(2, 1000000));
  run->add_option("--sizes", run_sizes, "Explicit sizes; required for spis")->delimiter(',');
  run->add_option("--truth", run_truth, "Simulator curve a,b,c")->delimiter(',');
  run->add_option("--sigma", run_sigma, "Simulator EM noise")->check(CLI::NonNegativeNumber);
  run->add_option("--em-at-zero", run_em_at_zero, "Simulator EM for the 0% subset")
      ->check(CLI::Range(0.0, 100.0));
  run->add_option("--sim-seed", run_sim_seed);
  run->add_flag("--predictions", run_predictions, "Simulator emits per-example predictions");
  run->add_option("--jobs", run_jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  run->add_option("--work-dir", run_work_dir, "Manifest directory for exec runners");
  run->add_option("--points-out", run_points_out, "Also write efficiency points JSON");

  // report
  std::string report_points, report_model, report_out, report_format = "both";
  std::vector<double> report_queries;
  auto* report = app.add_subcommand("report", "Render discrete/continuous plots as SVG and CSV");
  report->add_option("--points", report_points)->required();
  report->add_option("--model", report_model, "Curve model JSON (optional)");
  report->add_option("--queries", report_queries, "EM targets for guide lines")->delimiter(',');
  report->add_option("--out", report_out, "Output prefix (writes PREFIX.svg / PREFIX.csv)")->required();
  report->add_option("--format", report_format)->check(CLI::IsMember({"svg", "csv", "both"}));

  // complexity
  std::string cx_ledger, cx_annotations, cx_out;
  std::vector<std::string> cx_corpus, cx_slots;
  std::size_t cx_min = 10;
  auto* complexity = app.add_subcommand("complexity", "Intent-complexity aggregation");
  auto* cx_slots_opt = complexity->add_option("--slots", cx_slots, "Slot classes; prints the intent class")
                           ->delimiter(',');
  complexity->add_option("--ledger", cx_ledger, "Ledger with per-example predictions")->excludes(cx_slots_opt);
  complexity->add_option("--corpus", cx_corpus)->excludes(cx_slots_opt);
  complexity->add_option("--annotations", cx_annotations, "intent,class CSV")->excludes(cx_slots_opt);
  complexity->add_option("--min-occurrences", cx_min);
  complexity->add_option("--out", cx_out, "Per-class CSV output (stdout if omitted)");

  // compare
  std::vector<std::string> cmp_models;
  std::vector<double> cmp_em;
  std::string cmp_reference, cmp_csv, cmp_domain;
  auto* compare = app.add_subcommand("compare", "Compare data requirements across models");
  auto* cmp_models_opt = compare->add_option("--model", cmp_models, "NAME=MODEL_JSON (repeat)");
  compare->add_option("--em", cmp_em, "Exact-match targets")->delimiter(',');
  compare->add_option("--domain", cmp_domain);
  compare->add_option("--reference", cmp_reference, "Recorded comparison JSON")->excludes(cmp_models_opt);
  compare->add_option("--csv", cmp_csv, "Also write CSV here");

  // em
  std::string em_system, em_reference;
  auto* em = app.add_subcommand("em", "Exact match between two frame files (one frame per line)");
  em->add_option("--system", em_system)->required();
  em->add_option("--reference", em_reference)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*schedule) {
      std::cout << json(deff::make_schedule(schedule_n)).dump(2) << '\n';
      return kExitOk;
    }

    if (*sample) {
      const auto table = load_tables(sample_corpus);
      const deff::SubsetSpec spec{sample_domain, deff::parse_algorithm(sample_algorithm),
                                  sample_size, sample_seed};
      const deff::Subset subset = deff::draw_subset(table, spec);
      write_file(sample_out, json(subset).dump(2) + "\n");
      const auto rep = deff::subset_size_report(subset, table);
      std::cout << rep.row_count << " rows (" << deff::format_percent(rep.percent_of_domain)
                << "% of " << sample_domain << " train)\n";
      return kExitOk;
    }

    if (*fit) {
      const auto points = load_points(fit_points);
      std::size_t at_zero = 0;
      for (const auto& p : points) at_zero += p.subset_percent <= 0.0 ? 1 : 0;
      if (at_zero > 0) {
        std::cerr << "warning: " << at_zero
                  << " point(s) at 0% excluded from the fit (h has a pole at x = 0)\n";
      }
      deff::FitOptions options;
      options.average_repeats = fit_average;
      const auto model = deff::fit_curve(points, options);
      if (!model.well_formed()) {
        std::cerr << "warning: fitted curve is not well formed (expected a < 0, 0 < c < 200)\n";
      }
      if (!model.converged) std::cerr << "warning: fit did not converge\n";
      const std::string text = json(model).dump(2) + "\n";
      if (fit_out.empty()) {
        std::cout << text;
      } else {
        write_file(fit_out, text);
      }
      return kExitOk;
    }

    if (*query) {
      deff::CurveModel model;
      if (!query_model.empty()) {
        model = load_model(query_model);
      } else if (query_params.size() == 3) {
        const auto p = parse_params(query_params);
        model.a = p.a;
        model.b = p.b;
        model.c = p.c;
      } else {
        std::cerr << "query: pass --model FILE or --params a,b,c\n";
        return kExitUsage;
      }
      std::cout << "em\trequired_subset_percent\n";
      for (double y : query_em) std::cout << format_query(model, y) << '\n';
      return kExitOk;
    }

    if (*run) {
      const auto table = load_tables(run_corpus);
      const auto algorithm = deff::parse_algorithm(run_algorithm);
      std::vector<double> sizes = run_sizes;
      if (sizes.empty()) {
        if (algorithm == deff::Algorithm::spis) {
          std::cerr << "run: --sizes is required with --algorithm spis\n";
          return kExitUsage;
        }
        const auto sched = deff::make_schedule(run_n);
        sizes.assign(sched.sizes.begin(), sched.sizes.end());
      }
      const auto manifests = deff::build_manifests(table, run_target, sizes, algorithm,
                                                   run_seeds, run_model_id);
      std::unique_ptr<deff::Runner> runner;
      if (run_runner == "simulate") {
        deff::SimulatedRunnerConfig config;
        config.truth = parse_params(run_truth);
        config.noise_sigma = run_sigma;
        config.em_at_zero = run_em_at_zero;
        config.seed = run_sim_seed;
        config.emit_predictions = run_predictions;
        runner = std::make_unique<deff::SimulatedRunner>(config, &table);
      } else if (run_runner.starts_with("exec:") && run_runner.size() > 5) {
        const fs::path work = run_work_dir.empty()
                                  ? fs::path(fs::path(run_out).replace_extension("").string() + "_manifests")
                                  : fs::path(run_work_dir);
        runner = std::make_unique<deff::ExternalCommandRunner>(run_runner.substr(5), work);
      } else {
        std::cerr << "run: --runner must be 'simulate' or 'exec:COMMAND'\n";
        return kExitUsage;
      }
      const auto ledger = deff::run_protocol(manifests, *runner, run_jobs);
      write_file(run_out, deff::serialize_ledger(ledger));
      const auto failed = ledger.count(deff::RunStatus::failed);
      if (!run_points_out.empty() && failed < ledger.entries().size()) {
        write_file(run_points_out, json(deff::ledger_to_curve(ledger)).dump(2) + "\n");
      }
      std::cout << ledger.count(deff::RunStatus::succeeded) << " of " << ledger.entries().size()
                << " runs succeeded\n";
      for (const auto& e : ledger.entries()) {
        if (e.status == deff::RunStatus::failed) {
          std::cerr << "failed: " << e.manifest.run_id << ": " << e.error << '\n';
        }
      }
      return failed > 0 ? kExitPartial : kExitOk;
    }

    if (*report) {
      deff::ReportSpec spec;
      spec.points = load_points(report_points);
      if (!report_model.empty()) spec.model = load_model(report_model);
      spec.queries = report_queries;
      if (report_format != "csv") write_file(report_out + ".svg", deff::render_svg(spec));
      if (report_format != "svg") write_file(report_out + ".csv", deff::render_csv(spec));
      return kExitOk;
    }

    if (*complexity) {
      if (!cx_slots.empty()) {
        std::vector<deff::ComplexityClass> classes;
        for (const auto& s : cx_slots) {
          auto c = deff::parse_complexity(s);
          if (!c) throw deff::Error("unknown complexity class '" + s + "'");
          classes.push_back(*c);
        }
        std::cout << deff::to_string(deff::intent_complexity_from_slots(classes)) << '\n';
        return kExitOk;
      }
      if (cx_ledger.empty() || cx_corpus.empty() || cx_annotations.empty()) {
        std::cerr << "complexity: pass --slots, or --ledger, --corpus and --annotations\n";
        return kExitUsage;
      }
      const auto table = load_tables(cx_corpus);
      const auto ledger = parse_json_file(cx_ledger).get<deff::Ledger>();
      const auto annotations = deff::load_annotations(cx_annotations);
      const auto per_intent = deff::per_intent_points(ledger, table, cx_min);
      const auto curves = deff::per_class_curves(per_intent, annotations);
      std::string csv = "class,subset_percent,exact_match,intents\n";
      for (const auto& [cls, series] : curves) {
        for (const auto& p : series) {
          csv += std::string(deff::to_string(cls)) + "," + deff::format_percent(p.subset_percent, 4) +
                 "," + deff::format_percent(p.exact_match, 4) + "," + std::to_string(p.members) + "\n";
        }
      }
      if (cx_out.empty()) {
        std::cout << csv;
      } else {
        write_file(cx_out, csv);
      }
      return kExitOk;
    }

    if (*compare) {
      std::vector<deff::ComparisonTable> tables;
      if (!cmp_reference.empty()) {
        const json j = parse_json_file(cmp_reference);
        for (const auto& c : j.at("comparisons")) tables.push_back(deff::comparison_from_reference(c));
      } else {
        std::map<std::string, deff::CurveModel> curves;
        for (const auto& spec : cmp_models) {
          const auto eq = spec.find('=');
          if (eq == std::string::npos || eq == 0) {
            std::cerr << "compare: --model expects NAME=MODEL_JSON\n";
            return kExitUsage;
          }
          curves[spec.substr(0, eq)] = load_model(spec.substr(eq + 1));
        }
        tables.push_back(deff::compare_models(curves, cmp_em, cmp_domain));
      }
      std::string csv;
      for (const auto& t : tables) {
        std::cout << deff::comparison_to_text(t) << '\n';
        if (!t.domain.empty()) csv += "# domain: " + t.domain + "\n";
        csv += deff::comparison_to_csv(t);
      }
      if (!cmp_csv.empty()) write_file(cmp_csv, csv);
      return kExitOk;
    }

    if (*em) {
      const auto system = read_frames(em_system);
      const auto reference = read_frames(em_reference);
      std::cout << deff::format_percent(deff::exact_match(system, reference), 4) << '\n';
      return kExitOk;
    }
  } catch (const deff::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
