#pragma once

// Command-line front end: ingest, train, generate, evaluate, compare and
// synth-data. Every command records its inputs and seeds in a manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "profgan/core_data.hpp"
#include "profgan/gan.hpp"
#include "profgan/metrics.hpp"
#include "profgan/outage.hpp"
#include "profgan/store.hpp"
#include "profgan/synthesis.hpp"
#include "profgan/synthetic.hpp"

namespace profgan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kTrainingDivergence = 3,
  kPartialFailure = 4,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

/// Parsed --config file. Sections are optional; flags override them.
struct RunConfig {
  json raw = json::object();

  static RunConfig load(const std::string& path) {
    RunConfig c;
    if (!path.empty()) {
      if (!fs::exists(path)) throw DataError("config file not found: '" + path + "'");
      c.raw = store::read_json(path);
      if (!c.raw.is_object()) throw DataError("config file must hold a JSON object");
    }
    return c;
  }

  IngestOptions ingest_options() const {
    IngestOptions o;
    if (raw.contains("types")) o.allowed_types = raw.at("types").get<std::vector<std::string>>();
    return o;
  }

  gan::GanConfig gan_config() const {
    return raw.contains("gan") ? raw.at("gan").get<gan::GanConfig>() : gan::GanConfig{};
  }

  synthesis::SynthesisConfig synthesis_config() const {
    synthesis::SynthesisConfig s;
    if (raw.contains("synthesis")) {
      const auto& j = raw.at("synthesis");
      if (j.contains("ramp_percentile")) j.at("ramp_percentile").get_to(s.ramp_percentile);
      if (j.contains("max_resamples")) j.at("max_resamples").get_to(s.max_resamples);
      if (j.contains("blend_weight")) j.at("blend_weight").get_to(s.blend_weight);
      if (j.contains("duty_threshold")) j.at("duty_threshold").get_to(s.duty_threshold);
    }
    return s;
  }

  std::optional<outage::OutageConfig> outage_config() const {
    if (!raw.contains("outage")) return std::nullopt;
    outage::OutageConfig o;
    const auto& j = raw.at("outage");
    if (j.contains("for")) j.at("for").get_to(o.forced_outage_rate);
    if (j.contains("mttr")) j.at("mttr").get_to(o.mean_time_to_repair);
    return o;
  }

  std::optional<std::uint64_t> seed() const {
    if (!raw.contains("seed")) return std::nullopt;
    return raw.at("seed").get<std::uint64_t>();
  }
};

inline synthesis::ForecastTarget target_from_json(const json& j) {
  synthesis::ForecastTarget t;
  t.site_id = j.at("site_id").get<std::string>();
  t.type_label = j.at("type").get<std::string>();
  t.target_year = j.at("target_year").get<int>();
  t.annual_energy_mwh = j.at("annual_energy_mwh").get<double>();
  t.capacity_mw = j.at("capacity_mw").get<double>();
  if (j.contains("monthly_shares") && !j.at("monthly_shares").is_null()) {
    t.monthly_shares = j.at("monthly_shares").get<std::array<double, 12>>();
  }
  return t;
}

inline json target_to_json(const synthesis::ForecastTarget& t) {
  json j{{"site_id", t.site_id},
         {"type", t.type_label},
         {"target_year", t.target_year},
         {"annual_energy_mwh", t.annual_energy_mwh},
         {"capacity_mw", t.capacity_mw}};
  j["monthly_shares"] = t.monthly_shares ? json(*t.monthly_shares) : json(nullptr);
  return j;
}

inline std::vector<synthesis::ForecastTarget> targets_from_json(const json& j) {
  const json& list = j.is_object() && j.contains("targets") ? j.at("targets") : j;
  if (!list.is_array()) throw DataError("targets must be a JSON array or an object with a 'targets' array");
  std::vector<synthesis::ForecastTarget> out;
  for (const auto& t : list) {
    try {
      out.push_back(target_from_json(t));
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed target: ") + e.what());
    }
  }
  return out;
}

inline std::string profile_file_name(const std::string& site, int year) {
  return site + "_" + std::to_string(year) + ".csv";
}

inline fs::path require_out(const GlobalOptions& g) {
  if (g.out.empty()) throw UsageError("--out <dir> is required");
  return g.out;
}

// ---------------------------------------------------------------------------
// Commands

struct IngestArgs {
  std::string data, meta;
};

inline int cmd_ingest(const GlobalOptions& g, const IngestArgs& a, std::ostream& out) {
  const auto cfg = RunConfig::load(g.config_path);
  const auto dir = require_out(g);
  auto result = ingest_hourly_csv(a.data, a.meta, cfg.ingest_options());
  store::prepare_output_dir(dir, g.force);
  json manifest{{"command", "ingest"}, {"data", a.data}, {"meta", a.meta}, {"profiles", json::array()}};
  for (const auto& p : result.profiles) {
    manifest["profiles"].push_back({{"site_id", p.site_id}, {"year", p.year}, {"hours", p.values.size()}});
    out << p.site_id << " " << p.year << ": " << p.values.size() << " hours, " << std::fixed << std::setprecision(1)
        << p.energy_mwh() << " MWh (" << p.generation_type.label << ")\n";
  }
  store::write_store(dir, result.profiles, result.metas, manifest);
  return kSuccess;
}

struct TrainArgs {
  std::string store_dir;
  std::string mode = "single";
  std::vector<std::string> types;
  std::optional<std::size_t> epochs;
};

inline int cmd_train(const GlobalOptions& g, const TrainArgs& a, std::ostream& out) {
  const auto cfg = RunConfig::load(g.config_path);
  const auto dir = require_out(g);
  const auto mode = gan::mode_from_string(a.mode);
  auto gc = cfg.gan_config();
  if (a.epochs) gc.epochs = *a.epochs;
  if (g.seed) gc.seed = *g.seed;
  else if (auto s = cfg.seed()) gc.seed = *s;

  auto data = store::load_store(a.store_dir, cfg.ingest_options());
  std::vector<std::string> types = a.types;
  if (types.empty()) {
    for (const auto& t : data.registry.types()) types.push_back(t.label);
  }
  for (const auto& t : types) {
    if (!data.registry.find(t)) throw DataError("store has no generation type '" + t + "'");
  }
  if (mode == gan::GanMode::single_type && types.size() != 1) {
    throw UsageError("single-type training needs exactly one type; pass --type (store has " +
                     std::to_string(types.size()) + ")");
  }
  if (mode == gan::GanMode::multi_type && types.size() < 2) throw DataError("multi-type requires >= 2 types");

  std::vector<HourlyProfile> selected;
  for (auto& p : data.profiles) {
    if (std::find(types.begin(), types.end(), p.generation_type.label) != types.end()) selected.push_back(std::move(p));
  }
  std::vector<SiteMeta> metas;
  for (const auto& m : data.metas) {
    if (std::find(types.begin(), types.end(), m.generation_type.label) != types.end()) metas.push_back(m);
  }
  const auto set = build_training_set(selected, metas, gc.duty_threshold);
  out << "training " << gan::to_string(mode) << " GAN on " << set.samples.size() << " daily samples ("
      << set.registry.size() << " type(s)), " << gc.epochs << " epochs, seed " << gc.seed << "\n";
  const auto model = gan::train(set, gc, mode);

  store::prepare_output_dir(dir, g.force);
  gan::save_model(model, dir / "model.json");
  {
    std::ofstream hist(dir / "loss_history.csv");
    hist << "epoch,discriminator,generator,classification\n";
    hist << std::setprecision(10);
    for (std::size_t e = 0; e < model.history.size(); ++e) {
      const auto& h = model.history[e];
      hist << e + 1 << ',' << h.discriminator << ',' << h.generator << ',' << h.classification << '\n';
    }
  }
  store::write_json(dir / "manifest.json", json{{"command", "train"},
                                                {"store", a.store_dir},
                                                {"mode", gan::to_string(mode)},
                                                {"types", types},
                                                {"config", gc},
                                                {"samples", set.samples.size()}});
  if (!model.history.empty()) {
    const auto& last = model.history.back();
    out << std::setprecision(6) << "final losses: discriminator " << last.discriminator << ", generator "
        << last.generator;
    if (mode == gan::GanMode::multi_type) out << ", classification " << last.classification;
    out << "\n";
  } else {
    out << "no epochs run; wrote untrained model\n";
  }
  return kSuccess;
}

struct GenerateArgs {
  std::string model_path;
  std::string targets_path;
  std::optional<double> forced_outage_rate;
  std::optional<double> mttr;
};

inline int cmd_generate(const GlobalOptions& g, const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  const auto cfg = RunConfig::load(g.config_path);
  const auto dir = require_out(g);
  const auto model = gan::load_model(a.model_path);
  std::vector<synthesis::ForecastTarget> targets;
  if (!a.targets_path.empty()) targets = targets_from_json(store::read_json(a.targets_path));
  else if (cfg.raw.contains("targets")) targets = targets_from_json(cfg.raw.at("targets"));
  else throw UsageError("no targets: pass --targets <file> or list them in the config");

  auto sc = cfg.synthesis_config();
  sc.seed = g.seed ? *g.seed : cfg.seed().value_or(0);
  auto oc = cfg.outage_config();
  if (a.forced_outage_rate) {
    if (!oc) oc = outage::OutageConfig{};
    oc->forced_outage_rate = *a.forced_outage_rate;
  }
  if (a.mttr) {
    if (!oc) oc = outage::OutageConfig{};
    oc->mean_time_to_repair = *a.mttr;
  }
  if (oc) oc->validate();

  store::prepare_output_dir(dir, g.force);
  const gan::TrainedGanModel* models[] = {&model};
  const auto results = synthesis::generate_portfolio(models, targets, sc);

  json manifest{{"command", "generate"},
                {"model", a.model_path},
                {"seed", sc.seed},
                {"synthesis",
                 {{"ramp_percentile", sc.ramp_percentile},
                  {"max_resamples", sc.max_resamples},
                  {"blend_weight", sc.blend_weight},
                  {"duty_threshold", sc.duty_threshold}}},
                {"outage", oc ? json{{"for", oc->forced_outage_rate}, {"mttr", oc->mean_time_to_repair}} : json(nullptr)},
                {"entries", json::array()}};
  int failures = 0;
  for (const auto& r : results) {
    json entry = target_to_json(r.target);
    entry["seed"] = r.seed;
    if (r.profile) {
      HourlyProfile profile = *r.profile;
      if (oc) {
        auto local = *oc;
        local.seed = synthesis::derive_seed(sc.seed ^ 0x07a6eULL, r.target.site_id, r.target.target_year);
        entry["outage_seed"] = local.seed;
        profile = outage::inject_outages(profile, local);
      }
      const auto name = profile_file_name(r.target.site_id, r.target.target_year);
      store::write_profile_csv(dir / name, profile);
      entry["file"] = name;
      entry["status"] = "ok";
      out << name << ": " << std::fixed << std::setprecision(1) << profile.energy_mwh() << " MWh\n";
    } else {
      ++failures;
      entry["status"] = "error";
      entry["error"] = r.error;
      err << "target " << r.target.site_id << " " << r.target.target_year << ": " << r.error << "\n";
    }
    manifest["entries"].push_back(entry);
  }
  store::write_json(dir / "manifest.json", manifest);
  return failures ? kPartialFailure : kSuccess;
}

namespace detail {

struct GeneratedSet {
  std::vector<HourlyProfile> profiles;
  std::vector<synthesis::ForecastTarget> targets;
};

/// Generated profiles grouped by site, read back through the manifest.
inline std::map<std::string, GeneratedSet> read_generated(const fs::path& dir, const TypeRegistry& registry) {
  if (!fs::is_directory(dir)) throw DataError("generated directory '" + dir.string() + "' not found");
  const auto manifest = store::read_json(dir / "manifest.json");
  std::map<std::string, GeneratedSet> out;
  for (const auto& e : manifest.at("entries")) {
    if (e.value("status", "") != "ok") continue;
    const auto t = target_from_json(e);
    const auto* type = registry.find(t.type_label);
    const GenerationType gt = type ? *type : GenerationType{t.type_label, false, 0};
    auto& set = out[t.site_id];
    set.profiles.push_back(store::read_profile_csv(dir / e.at("file").get<std::string>(), t.site_id, gt, t.capacity_mw));
    set.targets.push_back(t);
  }
  if (out.empty()) throw DataError("no generated profiles listed in '" + (dir / "manifest.json").string() + "'");
  return out;
}

inline std::vector<HourlyProfile> history_for_site(const IngestResult& store, const std::string& site,
                                                   const std::string& type) {
  std::vector<HourlyProfile> out;
  for (const auto& p : store.profiles) {
    if (p.site_id != site) continue;
    if (p.generation_type.label != type) {
      throw DataError("site '" + site + "' is '" + p.generation_type.label + "' in the store but '" + type +
                      "' in the generated set");
    }
    out.push_back(p);
  }
  if (out.empty()) throw DataError("store has no history for site '" + site + "'");
  return out;
}

}  // namespace detail

/// Per-profile targets: magnitude error uses each profile's own target.
inline metrics::MetricsReport evaluate_set(std::span<const HourlyProfile> generated,
                                           std::span<const synthesis::ForecastTarget> targets,
                                           std::span<const HourlyProfile> history, const metrics::EvaluateOptions& opts) {
  auto report = metrics::evaluate(generated, history, targets.front(), opts);
  report.magnitude_error = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    report.magnitude_error =
        std::max(report.magnitude_error, std::abs(generated[i].energy_mwh() / targets[i].annual_energy_mwh - 1.0));
  }
  return report;
}

struct EvaluateArgs {
  std::string generated_dir;
  std::string store_dir;
};

inline int cmd_evaluate(const GlobalOptions& g, const EvaluateArgs& a, std::ostream& out) {
  const auto cfg = RunConfig::load(g.config_path);
  const auto dir = require_out(g);
  const auto hist = store::load_store(a.store_dir, cfg.ingest_options());
  const auto generated = detail::read_generated(a.generated_dir, hist.registry);
  const auto sc = cfg.synthesis_config();
  const metrics::EvaluateOptions opts{sc.ramp_percentile, sc.duty_threshold};
  store::prepare_output_dir(dir, g.force);
  std::ofstream csv(dir / "metrics.csv");
  csv << "site_id," << metrics::csv_header() << '\n';
  for (const auto& [site, set] : generated) {
    const auto history = detail::history_for_site(hist, site, set.targets.front().type_label);
    const auto report = evaluate_set(set.profiles, set.targets, history, opts);
    store::write_json(dir / ("report_" + site + ".json"), metrics::to_json(report));
    csv << site << ',' << metrics::csv_row("gan", report) << '\n';
    out << site << ": " << metrics::to_json(report).dump() << '\n';
  }
  return kSuccess;
}

inline int cmd_compare(const GlobalOptions& g, const EvaluateArgs& a, std::ostream& out) {
  const auto cfg = RunConfig::load(g.config_path);
  const auto dir = require_out(g);
  const auto hist = store::load_store(a.store_dir, cfg.ingest_options());
  const auto generated = detail::read_generated(a.generated_dir, hist.registry);
  const auto sc = cfg.synthesis_config();
  const metrics::EvaluateOptions opts{sc.ramp_percentile, sc.duty_threshold};
  const std::uint64_t seed = g.seed ? *g.seed : cfg.seed().value_or(0);
  store::prepare_output_dir(dir, g.force);
  std::ofstream csv(dir / "compare.csv");
  csv << "site_id," << metrics::csv_header() << '\n';
  for (const auto& [site, set] : generated) {
    const auto history = detail::history_for_site(hist, site, set.targets.front().type_label);
    std::vector<HourlyProfile> average, random;
    for (const auto& t : set.targets) {
      average.push_back(metrics::average_profile_baseline(history, t));
      random.push_back(metrics::random_sampling_baseline(history, t, synthesis::derive_seed(seed ^ 0xba5eULL, t.site_id, t.target_year)));
    }
    const std::pair<const char*, const std::vector<HourlyProfile>*> methods[] = {
        {"gan", &set.profiles}, {"average_profile", &average}, {"random_sampling", &random}};
    json reports = json::object();
    out << "site " << site << '\n' << "  " << metrics::csv_header() << '\n';
    for (const auto& [name, profiles] : methods) {
      const auto report = evaluate_set(*profiles, set.targets, history, opts);
      reports[name] = metrics::to_json(report);
      csv << site << ',' << metrics::csv_row(name, report) << '\n';
      out << "  " << metrics::csv_row(name, report) << '\n';
    }
    store::write_json(dir / ("compare_" + site + ".json"), reports);
  }
  return kSuccess;
}

struct SynthArgs {
  std::string spec_path;
  int years = 3;
  int start_year = 2017;
};

inline int cmd_synth_data(const GlobalOptions& g, const SynthArgs& a, std::ostream& out) {
  const auto cfg = RunConfig::load(g.config_path);
  const auto dir = require_out(g);
  if (!fs::exists(a.spec_path)) throw DataError("spec file not found: '" + a.spec_path + "'");
  synthetic::SynthSpec spec;
  try {
    spec = synthetic::spec_from_json(store::read_json(a.spec_path));
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid synthetic spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid synthetic spec: ") + e.what());
  }
  const std::uint64_t seed = g.seed ? *g.seed : cfg.seed().value_or(0);
  const auto data = synthetic::generate(spec, a.start_year, a.years, seed);
  store::prepare_output_dir(dir, g.force);
  store::write_store(dir, data.profiles, data.metas,
                     json{{"command", "synth-data"},
                          {"spec", store::read_json(a.spec_path)},
                          {"start_year", a.start_year},
                          {"years", a.years},
                          {"seed", seed}});
  for (const auto& p : data.profiles) {
    out << p.site_id << " " << p.year << ": " << std::fixed << std::setprecision(1) << p.energy_mwh() << " MWh\n";
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Synthesize long-term hourly generation profiles with GANs"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--force", g.force, "Overwrite an existing output directory");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate hourly CSVs into a profile store");
  c_ingest->add_option("--data", ingest.data, "Hourly data CSV")->required();
  c_ingest->add_option("--meta", ingest.meta, "Site meta CSV")->required();

  TrainArgs train;
  std::size_t epochs = 0;
  auto* c_train = app.add_subcommand("train", "Train a single-type or Multi-type GAN");
  c_train->add_option("--store", train.store_dir, "Profile store")->required();
  c_train->add_option("--mode", train.mode, "single or multi")->check(CLI::IsMember({"single", "multi"}));
  c_train->add_option("--type", train.types, "Generation type(s) to train on");
  auto* epochs_opt = c_train->add_option("--epochs", epochs, "Override the configured epoch count");

  GenerateArgs gen;
  double for_rate = 0.0, mttr = 24.0;
  auto* c_gen = app.add_subcommand("generate", "Generate yearly profiles for forecast targets");
  c_gen->add_option("--model", gen.model_path, "Trained checkpoint")->required();
  c_gen->add_option("--targets", gen.targets_path, "Targets JSON");
  auto* for_opt = c_gen->add_option("--for", for_rate, "Forced outage rate in [0, 1)");
  auto* mttr_opt = c_gen->add_option("--mttr", mttr, "Mean time to repair (hours)");

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Score generated profiles against history");
  c_eval->add_option("--generated", eval.generated_dir, "Directory written by generate")->required();
  c_eval->add_option("--store", eval.store_dir, "Profile store")->required();

  EvaluateArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Compare GAN profiles with the traditional baselines");
  c_cmp->add_option("--generated", cmp.generated_dir, "Directory written by generate")->required();
  c_cmp->add_option("--store", cmp.store_dir, "Profile store")->required();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-data", "Write a synthetic profile store");
  c_synth->add_option("--spec", synth.spec_path, "Families spec JSON")->required();
  c_synth->add_option("--years", synth.years, "Number of years")->check(CLI::PositiveNumber);
  c_synth->add_option("--start-year", synth.start_year, "First calendar year");

  for (auto* sub : {c_ingest, c_train, c_gen, c_eval, c_cmp, c_synth}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  if (seed_opt->count()) g.seed = seed;
  if (epochs_opt->count()) train.epochs = epochs;
  if (for_opt->count()) gen.forced_outage_rate = for_rate;
  if (mttr_opt->count()) gen.mttr = mttr;

  try {
    if (*c_ingest) return cmd_ingest(g, ingest, out);
    if (*c_train) return cmd_train(g, train, out);
    if (*c_gen) return cmd_generate(g, gen, out, err);
    if (*c_eval) return cmd_evaluate(g, eval, out);
    if (*c_cmp) return cmd_compare(g, cmp, out);
    if (*c_synth) return cmd_synth_data(g, synth, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kTrainingDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

}  // namespace profgan::cli
