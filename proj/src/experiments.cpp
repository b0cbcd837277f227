#include "ctlab/experiments.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ctlab/hash.hpp"
#include "ctlab/image_ops.hpp"
#include "ctlab/io.hpp"
#include "ctlab/metrics.hpp"
#include "ctlab/solvers.hpp"
#include "ctlab/version.hpp"

namespace ctlab {

namespace {

using nlohmann::json;

// PSF width of the reconstruction-surrogate domain at a 128 grid; scaled
// with resolution so the physical blur stays constant.
constexpr double kSurrogatePsfPx128 = 0.75;

// ---------------------------------------------------------------------------
// small string / enum plumbing

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

ExperimentKind experiment_from_string(const std::string& s) {
  if (s == "gen-dataset") return ExperimentKind::gen_dataset;
  if (s == "sweep") return ExperimentKind::sweep;
  if (s == "schedule-grid") return ExperimentKind::schedule_grid;
  if (s == "gap") return ExperimentKind::gap;
  if (s == "reconstruct") return ExperimentKind::reconstruct;
  throw ConfigError("unknown experiment: " + s);
}

Domain domain_from_string(const std::string& s) {
  if (s == "sim_std") return Domain::sim_std;
  if (s == "sim_cad") return Domain::sim_cad;
  if (s == "sim_recon_surrogate") return Domain::sim_recon_surrogate;
  throw ConfigError("unknown domain: " + s);
}

PriorKind prior_from_string(const std::string& s) {
  if (s == "zero") return PriorKind::zero;
  if (s == "gaussian") return PriorKind::gaussian;
  if (s == "smoothing") return PriorKind::smoothing;
  if (s == "external") return PriorKind::external;
  throw ConfigError("unknown prior kind: " + s);
}

DataConsistencyForm form_from_string(const std::string& s) {
  if (s == "regularized") return DataConsistencyForm::regularized;
  if (s == "unregularized") return DataConsistencyForm::unregularized;
  if (s == "gradient_surrogate") return DataConsistencyForm::gradient_surrogate;
  throw ConfigError("unknown data-consistency form: " + s);
}

const char* to_string(DataConsistencyForm f) {
  switch (f) {
    case DataConsistencyForm::regularized: return "regularized";
    case DataConsistencyForm::unregularized: return "unregularized";
    case DataConsistencyForm::gradient_surrogate: return "gradient_surrogate";
  }
  return "unknown";
}

json gamma_to_json(const GammaSchedule& g) {
  if (g.kind == GammaKind::constant) return json{{"kind", "constant"}, {"gamma", g.gamma_const}};
  return json{{"kind", "linear_decay"}, {"gamma_max", g.gamma_max}, {"gamma_min", g.gamma_min}};
}

GammaSchedule gamma_from_json(const json& j) {
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") return GammaSchedule::constant(j.value("gamma", 1.0));
  if (kind == "linear_decay")
    return GammaSchedule::linear_decay(j.value("gamma_max", 5.0), j.value("gamma_min", 0.0));
  throw ConfigError("unknown gamma schedule kind: " + kind);
}

// ---------------------------------------------------------------------------
// result rows

const char* kCsvHeader =
    "run_id,experiment,config_hash,version,domain,prior,algorithm,n_views,resolution,"
    "nfe,noise_schedule,schedule_kind,gamma_const,gamma_max,gamma_min,eta,m_steps,"
    "sigma_y,mismatch,seed,psnr_db,ssim,data_range_mode,error";

struct Row {
  std::string run_id, experiment, config_hash, version, domain, prior, algorithm;
  std::string n_views, resolution, nfe, noise_schedule, schedule_kind;
  std::string gamma_const, gamma_max, gamma_min, eta, m_steps, sigma_y, mismatch, seed;
  std::string psnr_db, ssim, data_range_mode, error;

  // Numeric copies for summaries; NaN when not applicable.
  double psnr_value = std::numeric_limits<double>::quiet_NaN();
  double ssim_value = std::numeric_limits<double>::quiet_NaN();

  std::string to_csv() const {
    std::string out;
    const std::string* fields[] = {&run_id, &experiment, &config_hash, &version, &domain,
                                   &prior, &algorithm, &n_views, &resolution, &nfe,
                                   &noise_schedule, &schedule_kind, &gamma_const, &gamma_max,
                                   &gamma_min, &eta, &m_steps, &sigma_y, &mismatch, &seed,
                                   &psnr_db, &ssim, &data_range_mode, &error};
    for (std::size_t i = 0; i < std::size(fields); ++i) {
      if (i) out += ',';
      out += csv_escape(*fields[i]);
    }
    return out;
  }

  /// Grouping key for seed aggregation: everything except seed and metrics.
  std::string cell_key() const {
    return domain + '|' + prior + '|' + algorithm + '|' + n_views + '|' + resolution + '|' +
           nfe + '|' + schedule_kind + '|' + gamma_const + '|' + gamma_max + '|' + gamma_min +
           '|' + mismatch;
  }
};

struct CellOutcome {
  std::vector<Row> rows;
  std::vector<std::string> profile_lines;
};

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << text;
}

// Writes per-cell fragments, then the merged results.csv and summary.csv.
// Returns the number of error rows.
int finalize_results(const ExperimentConfig& cfg, const std::vector<CellOutcome>& cells) {
  const auto cells_dir = cfg.out_dir / "cells";
  std::filesystem::create_directories(cells_dir);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::string text;
    for (const auto& row : cells[i].rows) text += row.to_csv() + '\n';
    char name[32];
    std::snprintf(name, sizeof(name), "cell_%06zu.csv", i);
    write_text(cells_dir / name, text);
  }

  int errors = 0;
  std::string merged = std::string(kCsvHeader) + '\n';
  for (const auto& cell : cells)
    for (const auto& row : cell.rows) {
      merged += row.to_csv() + '\n';
      if (!row.error.empty()) ++errors;
    }
  write_text(cfg.out_dir / "results.csv", merged);

  // Seed-ensemble summary in first-appearance order.
  std::vector<std::string> order;
  std::vector<std::vector<const Row*>> groups;
  for (const auto& cell : cells)
    for (const auto& row : cell.rows) {
      if (!row.error.empty()) continue;
      const std::string key = row.cell_key();
      auto it = std::find(order.begin(), order.end(), key);
      std::size_t idx;
      if (it == order.end()) {
        order.push_back(key);
        groups.emplace_back();
        idx = order.size() - 1;
      } else {
        idx = static_cast<std::size_t>(it - order.begin());
      }
      groups[idx].push_back(&row);
    }

  std::string summary =
      "domain,prior,algorithm,n_views,resolution,nfe,schedule_kind,gamma_const,gamma_max,"
      "gamma_min,mismatch,n_seeds,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
  for (const auto& grp : groups) {
    std::vector<MetricReport> reports;
    reports.reserve(grp.size());
    for (const Row* r : grp) reports.push_back({r->psnr_value, r->ssim_value, 1, 0.0});
    const MetricReport agg = ensemble(reports);
    double ssim_sq = 0.0;
    for (const Row* r : grp) ssim_sq += (r->ssim_value - agg.ssim) * (r->ssim_value - agg.ssim);
    const double ssim_std = std::sqrt(ssim_sq / reports.size());
    const Row& head = *grp.front();
    summary += head.domain + ',' + head.prior + ',' + head.algorithm + ',' + head.n_views +
               ',' + head.resolution + ',' + head.nfe + ',' + head.schedule_kind + ',' +
               head.gamma_const + ',' + head.gamma_max + ',' + head.gamma_min + ',' +
               head.mismatch + ',' + std::to_string(agg.n_seeds) + ',' +
               format_double(agg.psnr_db) + ',' + format_double(agg.std_psnr_db) + ',' +
               format_double(agg.ssim) + ',' + format_double(ssim_std) + '\n';
  }
  write_text(cfg.out_dir / "summary.csv", summary);
  return errors;
}

// ---------------------------------------------------------------------------
// shared reconstruction plumbing

std::unique_ptr<Denoiser> make_denoiser(const PriorConfig& p, const GridSpec& grid) {
  switch (p.kind) {
    case PriorKind::zero:
      return std::make_unique<ZeroDenoiser>();
    case PriorKind::gaussian: {
      GaussianPriorParams params;
      params.mean_image = grid.make_zero();
      params.variance_tau2 = p.gaussian_tau2;
      return std::make_unique<GaussianDenoiser>(std::move(params));
    }
    case PriorKind::smoothing:
      return std::make_unique<SmoothingDenoiser>(p.sigma_max_px);
    case PriorKind::external:
      return std::make_unique<ExternalDenoiser>(p.executable, p.timeout_seconds);
  }
  throw ConfigError("unknown prior kind");
}

Sinogram simulate_clean(const ImageGrid& truth, const FanBeamGeometry& g, double sigma_y,
                        Rng rng) {
  Sinogram y = forward_project(truth, g);
  if (sigma_y > 0.0)
    for (Eigen::Index i = 0; i < y.values.size(); ++i)
      y.values.data()[i] += sigma_y * rng.normal();
  return y;
}

// Mismatched measurement: synthesized from a supersampled rasterization
// through the perturbed geometry, then pushed through the value-domain
// stages. Reconstruction binds to the nominal geometry g, so the model error
// contains a discretization component that shrinks as the reconstruction
// grid is refined.
Sinogram simulate_mismatched(Domain d, const FanBeamGeometry& g, const GridSpec& grid,
                             const MismatchSettings& m, double sigma_y,
                             double attenuation_per_unit, Rng rng) {
  const int hi = std::max(m.supersample_side, 2 * grid.side_pixels);
  const GridSpec hi_spec{hi, grid.pixel_size_mm * grid.side_pixels / hi};
  const ImageGrid truth_hi = domain_truth(d, hi_spec);
  const FanBeamGeometry g_real = perturbed_geometry(g, m.config);
  Sinogram y = forward_project(truth_hi, g_real);
  if (sigma_y > 0.0)
    for (Eigen::Index i = 0; i < y.values.size(); ++i)
      y.values.data()[i] += sigma_y * rng.normal();
  // The beam-hardening and photon stages act on physical line integrals;
  // reconstruction stays in phantom units.
  y.values *= attenuation_per_unit;
  Sinogram out = apply_mismatch(y, g, m.config, rng);
  out.values /= attenuation_per_unit;
  return out;
}

struct CellContext {
  const ExperimentConfig& cfg;
  std::string run_id;
  Domain domain;
  const PriorConfig& prior;
  int n_views;
  int resolution;
  int nfe;
  GammaSchedule gamma;
  std::uint64_t seed;
  bool mismatched;
};

Row base_row(const CellContext& c) {
  Row r;
  r.run_id = c.run_id;
  r.experiment = to_string(c.cfg.experiment);
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(c.cfg.config_hash()));
  r.config_hash = hash;
  r.version = kVersion;
  r.domain = to_string(c.domain);
  r.prior = c.prior.name();
  r.n_views = std::to_string(c.n_views);
  r.resolution = std::to_string(c.resolution);
  r.noise_schedule = c.cfg.noise_schedule_kind == ScheduleKind::cosine ? "cosine" : "linear";
  r.eta = format_double(c.cfg.sampler.eta);
  r.m_steps = std::to_string(c.cfg.sampler.m_steps);
  r.sigma_y = format_double(c.cfg.sampler.sigma_y);
  r.mismatch = c.mismatched ? "yes" : "no";
  r.seed = std::to_string(c.seed);
  r.data_range_mode = "auto";
  return r;
}

void fill_gamma(Row& r, const GammaSchedule& g) {
  if (g.kind == GammaKind::constant) {
    r.schedule_kind = "constant";
    r.gamma_const = format_double(g.gamma_const);
  } else {
    r.schedule_kind = "linear_decay";
    r.gamma_max = format_double(g.gamma_max);
    r.gamma_min = format_double(g.gamma_min);
  }
}

void fill_metrics(Row& r, const ImageGrid& recon, const ImageGrid& truth) {
  const double p = psnr(recon, truth);
  const double s = ssim(recon, truth);
  r.psnr_db = format_double(p);
  r.ssim = format_double(s);
  r.psnr_value = p;
  r.ssim_value = s;
}

void maybe_write_png(const ExperimentConfig& cfg, const std::string& stem,
                     const ImageGrid& img) {
  if (!cfg.write_images) return;
  std::filesystem::create_directories(cfg.out_dir / "images");
  write_png_gray(cfg.out_dir / "images" / (stem + ".png"), img);
}

// Measurement noise stream, keyed so that every seed of a cell sees the same
// measurement while distinct measurement settings get distinct streams.
Rng measurement_rng(const ExperimentConfig& cfg, std::uint64_t key) {
  return Rng(cfg.master_seed).child(0x4d454153 + key);  // "MEAS"
}

std::uint64_t sampler_seed(const ExperimentConfig& cfg, std::uint64_t cell_index) {
  return Rng(cfg.master_seed).child(0x53414d50 + cell_index).seed();  // "SAMP"
}

}  // namespace

// ---------------------------------------------------------------------------
// config

const char* to_string(ExperimentKind e) {
  switch (e) {
    case ExperimentKind::gen_dataset: return "gen-dataset";
    case ExperimentKind::sweep: return "sweep";
    case ExperimentKind::schedule_grid: return "schedule-grid";
    case ExperimentKind::gap: return "gap";
    case ExperimentKind::reconstruct: return "reconstruct";
  }
  return "unknown";
}

const char* to_string(Domain d) {
  switch (d) {
    case Domain::sim_std: return "sim_std";
    case Domain::sim_cad: return "sim_cad";
    case Domain::sim_recon_surrogate: return "sim_recon_surrogate";
  }
  return "unknown";
}

std::string PriorConfig::name() const {
  switch (kind) {
    case PriorKind::zero: return "zero";
    case PriorKind::gaussian: return "gaussian";
    case PriorKind::smoothing: return "smoothing";
    case PriorKind::external: return "external";
  }
  return "unknown";
}

std::string ExperimentConfig::resolved_json() const {
  json j;
  j["experiment"] = to_string(experiment);
  j["seed"] = master_seed;
  j["threads"] = threads;
  j["attenuation_per_unit"] = attenuation_per_unit;
  {
    json arr = json::array();
    for (auto d : domains) arr.push_back(to_string(d));
    j["domains"] = arr;
  }
  {
    json arr = json::array();
    for (const auto& p : priors) {
      json pj{{"kind", p.name()}};
      if (p.kind == PriorKind::smoothing) pj["sigma_max_px"] = p.sigma_max_px;
      if (p.kind == PriorKind::gaussian) pj["tau2"] = p.gaussian_tau2;
      if (p.kind == PriorKind::external) {
        pj["executable"] = p.executable;
        pj["timeout_seconds"] = p.timeout_seconds;
      }
      arr.push_back(pj);
    }
    j["priors"] = arr;
  }
  j["geometry"] = json{{"sod_mm", scanner.sod_mm},
                       {"sdd_mm", scanner.sdd_mm},
                       {"det_pixel_mm", scanner.det_pixel_mm},
                       {"n_channels", scanner.n_channels},
                       {"span", span == AngularSpan::half ? "half" : "full"}};
  j["grid_side"] = grid_side;
  j["views"] = views;
  j["nfe"] = nfes;
  {
    json arr = json::array();
    for (const auto& g : gammas) arr.push_back(gamma_to_json(g));
    j["gammas"] = arr;
  }
  j["seeds"] = seeds;
  j["sampler"] = json{{"m_steps", sampler.m_steps},
                      {"eta", sampler.eta},
                      {"sigma_y", sampler.sigma_y},
                      {"form", to_string(sampler.form)}};
  j["cgls_iters"] = cgls_iters;
  j["noise_schedule"] =
      json{{"kind", noise_schedule_kind == ScheduleKind::cosine ? "cosine" : "linear"},
           {"total_steps", total_steps}};
  j["mismatch"] = json{{"enabled", mismatch.enabled},
                       {"angular_offset_deg", mismatch.config.angular_offset_deg},
                       {"cor_shift_channels", mismatch.config.cor_shift_channels},
                       {"gain_drift_amp", mismatch.config.gain_drift_amp},
                       {"photon_count_i0", mismatch.config.photon_count_i0},
                       {"beam_hardening_beta", mismatch.config.beam_hardening_beta},
                       {"supersample_side", mismatch.supersample_side}};
  j["resolutions"] = resolutions;
  j["profile_row"] = profile_row;
  j["dataset"] = json{{"kind", dataset.kind},
                      {"count", dataset.count},
                      {"pi", dataset.perturb.mix_pi},
                      {"sigma_intensity", dataset.perturb.sigma_intensity},
                      {"sigma_axes", dataset.perturb.sigma_axes},
                      {"sigma_center", dataset.perturb.sigma_center},
                      {"sigma_phi_deg", dataset.perturb.sigma_phi_deg},
                      {"p_add_drop", dataset.perturb.p_add_drop},
                      {"rasterize", dataset.rasterize_samples},
                      {"raster_side", dataset.raster_side}};
  j["write_images"] = write_images;
  j["snapshot_stride"] = snapshot_stride;
  return j.dump(2);
}

std::uint64_t ExperimentConfig::config_hash() const {
  return fnv1a_string(resolved_json());
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig cfg;
  cfg.experiment = kind;
  cfg.seeds.resize(10);
  for (int i = 0; i < 10; ++i) cfg.seeds[i] = static_cast<std::uint64_t>(i);

  MismatchConfig mc;
  mc.angular_offset_deg = 0.5;
  mc.cor_shift_channels = 1.5;
  mc.gain_drift_amp = 0.02;
  mc.photon_count_i0 = 5e4;
  mc.beam_hardening_beta = 0.05;
  cfg.mismatch.config = mc;

  switch (kind) {
    case ExperimentKind::sweep:
      cfg.views = {5, 9, 12, 18, 24, 30};
      cfg.nfes = {100};
      cfg.gammas = {GammaSchedule::constant(1.0)};
      cfg.domains = {Domain::sim_std};
      break;
    case ExperimentKind::schedule_grid:
      cfg.views = {12, 24};
      cfg.nfes = {1000, 100, 10};
      cfg.gammas = {GammaSchedule::constant(0.5), GammaSchedule::constant(5.0),
                    GammaSchedule::linear_decay(5.0), GammaSchedule::linear_decay(50.0),
                    GammaSchedule::linear_decay(150.0)};
      cfg.domains = {Domain::sim_recon_surrogate};
      cfg.mismatch.enabled = true;
      break;
    case ExperimentKind::gap:
      cfg.views = {9, 25};
      cfg.nfes = {100};
      cfg.gammas = {GammaSchedule::constant(1.0)};
      cfg.domains = {Domain::sim_recon_surrogate};
      cfg.mismatch.enabled = true;
      cfg.resolutions = {128, 256, 512};
      break;
    case ExperimentKind::reconstruct:
      cfg.views = {12};
      cfg.nfes = {100};
      cfg.gammas = {GammaSchedule::constant(1.0)};
      cfg.domains = {Domain::sim_std};
      cfg.seeds = {0};
      break;
    case ExperimentKind::gen_dataset: {
      cfg.dataset.kind = "std";
      cfg.dataset.count = 1000;
      PerturbationConfig p;
      p.sigma_intensity = 0.03;
      p.sigma_axes = 0.02;
      p.sigma_center = 0.01;
      p.sigma_phi_deg = 10.0;
      p.p_add_drop = 0.01;
      p.mix_pi = 0.0;
      cfg.dataset.perturb = p;
      break;
    }
  }
  return cfg;
}

namespace {

std::vector<std::uint64_t> parse_seeds(const json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_number_integer()) {
    const long long n = j.get<long long>();
    if (n < 1) throw ConfigError("seeds count must be >= 1");
    for (long long i = 0; i < n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  } else if (j.is_array()) {
    for (const auto& v : j) seeds.push_back(v.get<std::uint64_t>());
    if (seeds.empty()) throw ConfigError("seeds list must be non-empty");
  } else {
    throw ConfigError("seeds must be a count or a list");
  }
  return seeds;
}

void apply_json(ExperimentConfig& cfg, const json& j) {
  static const std::vector<std::string> known = {
      "experiment", "seed", "out_dir", "threads", "attenuation_per_unit", "domains",
      "priors", "geometry",
      "grid_side", "views", "nfe", "gammas", "seeds", "sampler", "cgls_iters",
      "noise_schedule", "mismatch", "resolutions", "profile_row", "dataset",
      "write_images", "snapshot_stride"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key: " + key);
  }

  if (j.contains("seed")) cfg.master_seed = j["seed"].get<std::uint64_t>();
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("attenuation_per_unit"))
    cfg.attenuation_per_unit = j["attenuation_per_unit"].get<double>();
  if (j.contains("domains")) {
    cfg.domains.clear();
    for (const auto& d : j["domains"]) cfg.domains.push_back(domain_from_string(d.get<std::string>()));
    if (cfg.domains.empty()) throw ConfigError("domains must be non-empty");
  }
  if (j.contains("priors")) {
    cfg.priors.clear();
    for (const auto& p : j["priors"]) {
      PriorConfig pc;
      pc.kind = prior_from_string(p.value("kind", "smoothing"));
      pc.sigma_max_px = p.value("sigma_max_px", pc.sigma_max_px);
      pc.gaussian_tau2 = p.value("tau2", pc.gaussian_tau2);
      pc.executable = p.value("executable", pc.executable);
      pc.timeout_seconds = p.value("timeout_seconds", pc.timeout_seconds);
      if (pc.kind == PriorKind::external && pc.executable.empty())
        throw ConfigError("external prior requires an executable");
      cfg.priors.push_back(std::move(pc));
    }
    if (cfg.priors.empty()) throw ConfigError("priors must be non-empty");
  }
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    cfg.scanner.sod_mm = g.value("sod_mm", cfg.scanner.sod_mm);
    cfg.scanner.sdd_mm = g.value("sdd_mm", cfg.scanner.sdd_mm);
    cfg.scanner.det_pixel_mm = g.value("det_pixel_mm", cfg.scanner.det_pixel_mm);
    cfg.scanner.n_channels = g.value("n_channels", cfg.scanner.n_channels);
    const std::string span = g.value("span", "half");
    if (span == "half")
      cfg.span = AngularSpan::half;
    else if (span == "full")
      cfg.span = AngularSpan::full;
    else
      throw ConfigError("geometry.span must be half or full");
  }
  if (j.contains("grid_side")) cfg.grid_side = j["grid_side"].get<int>();
  if (j.contains("views")) cfg.views = j["views"].get<std::vector<int>>();
  if (j.contains("nfe")) cfg.nfes = j["nfe"].get<std::vector<int>>();
  if (j.contains("gammas")) {
    cfg.gammas.clear();
    for (const auto& g : j["gammas"]) cfg.gammas.push_back(gamma_from_json(g));
  }
  if (j.contains("seeds")) cfg.seeds = parse_seeds(j["seeds"]);
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    cfg.sampler.m_steps = s.value("m_steps", cfg.sampler.m_steps);
    cfg.sampler.eta = s.value("eta", cfg.sampler.eta);
    cfg.sampler.sigma_y = s.value("sigma_y", cfg.sampler.sigma_y);
    if (s.contains("form")) cfg.sampler.form = form_from_string(s["form"].get<std::string>());
  }
  if (j.contains("cgls_iters")) cfg.cgls_iters = j["cgls_iters"].get<int>();
  if (j.contains("noise_schedule")) {
    const auto& s = j["noise_schedule"];
    const std::string kind = s.value("kind", "cosine");
    if (kind == "cosine")
      cfg.noise_schedule_kind = ScheduleKind::cosine;
    else if (kind == "linear")
      cfg.noise_schedule_kind = ScheduleKind::linear;
    else
      throw ConfigError("noise_schedule.kind must be cosine or linear");
    cfg.total_steps = s.value("total_steps", cfg.total_steps);
  }
  if (j.contains("mismatch")) {
    const auto& m = j["mismatch"];
    cfg.mismatch.enabled = m.value("enabled", cfg.mismatch.enabled);
    cfg.mismatch.config.angular_offset_deg =
        m.value("angular_offset_deg", cfg.mismatch.config.angular_offset_deg);
    cfg.mismatch.config.cor_shift_channels =
        m.value("cor_shift_channels", cfg.mismatch.config.cor_shift_channels);
    cfg.mismatch.config.gain_drift_amp =
        m.value("gain_drift_amp", cfg.mismatch.config.gain_drift_amp);
    cfg.mismatch.config.photon_count_i0 =
        m.value("photon_count_i0", cfg.mismatch.config.photon_count_i0);
    cfg.mismatch.config.beam_hardening_beta =
        m.value("beam_hardening_beta", cfg.mismatch.config.beam_hardening_beta);
    cfg.mismatch.supersample_side = m.value("supersample_side", cfg.mismatch.supersample_side);
  }
  if (j.contains("resolutions")) cfg.resolutions = j["resolutions"].get<std::vector<int>>();
  if (j.contains("profile_row")) cfg.profile_row = j["profile_row"].get<int>();
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    cfg.dataset.kind = d.value("kind", cfg.dataset.kind);
    cfg.dataset.count = d.value("count", cfg.dataset.count);
    cfg.dataset.perturb.mix_pi = d.value("pi", cfg.dataset.perturb.mix_pi);
    cfg.dataset.perturb.sigma_intensity =
        d.value("sigma_intensity", cfg.dataset.perturb.sigma_intensity);
    cfg.dataset.perturb.sigma_axes = d.value("sigma_axes", cfg.dataset.perturb.sigma_axes);
    cfg.dataset.perturb.sigma_center = d.value("sigma_center", cfg.dataset.perturb.sigma_center);
    cfg.dataset.perturb.sigma_phi_deg =
        d.value("sigma_phi_deg", cfg.dataset.perturb.sigma_phi_deg);
    cfg.dataset.perturb.p_add_drop = d.value("p_add_drop", cfg.dataset.perturb.p_add_drop);
    cfg.dataset.rasterize_samples = d.value("rasterize", cfg.dataset.rasterize_samples);
    cfg.dataset.raster_side = d.value("raster_side", cfg.dataset.raster_side);
    if (cfg.dataset.kind != "std" && cfg.dataset.kind != "exp" && cfg.dataset.kind != "mix")
      throw ConfigError("dataset.kind must be std, exp or mix");
  }
  if (j.contains("write_images")) cfg.write_images = j["write_images"].get<bool>();
  if (j.contains("snapshot_stride")) cfg.snapshot_stride = j["snapshot_stride"].get<int>();
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
  if (cfg.grid_side < 16) throw ConfigError("grid_side must be >= 16");
  if (cfg.total_steps < 1) throw ConfigError("noise_schedule.total_steps must be >= 1");
  for (int v : cfg.views)
    if (v < 1) throw ConfigError("views entries must be >= 1");
  for (int n : cfg.nfes)
    if (n < 1 || n > cfg.total_steps)
      throw ConfigError("nfe entries must be in [1, total_steps]");
  for (int r : cfg.resolutions)
    if (r < 16) throw ConfigError("resolutions entries must be >= 16");
  if (cfg.experiment != ExperimentKind::gen_dataset) {
    if (cfg.views.empty()) throw ConfigError("views must be non-empty");
    if (cfg.nfes.empty()) throw ConfigError("nfe must be non-empty");
    if (cfg.gammas.empty()) throw ConfigError("gammas must be non-empty");
  }
  if (cfg.cgls_iters < 1) throw ConfigError("cgls_iters must be >= 1");
  if (!(cfg.attenuation_per_unit > 0))
    throw ConfigError("attenuation_per_unit must be > 0");
  if (cfg.dataset.count < 1) throw ConfigError("dataset.count must be >= 1");
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path, long long seed_override,
                             const std::string& out_override, int threads_override,
                             int snapshot_override) {
  json j;
  {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path.string());
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");
  if (!j.contains("experiment")) throw ConfigError("config must name an experiment");

  ExperimentConfig cfg = default_config(experiment_from_string(j["experiment"].get<std::string>()));
  try {
    apply_json(cfg, j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }

  if (seed_override >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (threads_override > 0) cfg.threads = threads_override;
  if (snapshot_override >= 0) cfg.snapshot_stride = snapshot_override;
  validate_config(cfg);
  return cfg;
}

ImageGrid domain_truth(Domain d, const GridSpec& grid) {
  switch (d) {
    case Domain::sim_std:
      return rasterize(standard_shepp_logan(), grid.side_pixels, grid.pixel_size_mm);
    case Domain::sim_cad:
      return rasterize(experimental_shepp_logan(), grid.side_pixels, grid.pixel_size_mm);
    case Domain::sim_recon_surrogate: {
      ImageGrid img =
          rasterize(experimental_shepp_logan(), grid.side_pixels, grid.pixel_size_mm);
      img.values = gaussian_blur(img.values, kSurrogatePsfPx128 * grid.side_pixels / 128.0);
      return img;
    }
  }
  throw ConfigError("unknown domain");
}

// ---------------------------------------------------------------------------
// experiment drivers

namespace {

void prepare_out_dir(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "config.resolved.json", cfg.resolved_json() + "\n");
}

std::string run_id_for(const ExperimentConfig& cfg, int cell) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s-%06d", to_string(cfg.experiment), cell);
  return buf;
}

}  // namespace

int run_sweep(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const int nd = static_cast<int>(cfg.domains.size());
  const int np = static_cast<int>(cfg.priors.size());
  const int nv = static_cast<int>(cfg.views.size());
  const int ns = static_cast<int>(cfg.seeds.size());
  const int n_cells = nd * np * nv * ns;

  std::vector<CellOutcome> cells(n_cells);
  parallel_for(n_cells, cfg.threads, [&](int i) {
    const int s_i = i % ns;
    const int v_i = (i / ns) % nv;
    const int p_i = (i / (ns * nv)) % np;
    const int d_i = i / (ns * nv * np);

    CellContext ctx{cfg,
                    run_id_for(cfg, i),
                    cfg.domains[d_i],
                    cfg.priors[p_i],
                    cfg.views[v_i],
                    cfg.grid_side,
                    cfg.nfes[0],
                    cfg.gammas[0],
                    cfg.seeds[s_i],
                    cfg.mismatch.enabled};
    Row cgls_row = base_row(ctx);
    cgls_row.algorithm = "cgls";
    Row dds_row = base_row(ctx);
    dds_row.algorithm = "dds";
    dds_row.nfe = std::to_string(ctx.nfe);
    fill_gamma(dds_row, ctx.gamma);

    try {
      const FanBeamGeometry g = make_geometry(ctx.n_views, cfg.span, cfg.scanner);
      const GridSpec grid = default_grid_spec(g, cfg.grid_side);
      const ImageGrid truth = domain_truth(ctx.domain, grid);

      const std::uint64_t meas_key =
          static_cast<std::uint64_t>(d_i) * 10000 + static_cast<std::uint64_t>(v_i);
      Rng meas = measurement_rng(cfg, meas_key);
      const Sinogram y =
          cfg.mismatch.enabled
              ? simulate_mismatched(ctx.domain, g, grid, cfg.mismatch, cfg.sampler.sigma_y,
                                    cfg.attenuation_per_unit, meas)
              : simulate_clean(truth, g, cfg.sampler.sigma_y, meas);

      // The two reconstructions fail independently; a broken prior must not
      // take the CGLS row down with it.
      try {
        const ImageGrid cgls_recon = cgls(y, g, grid, cfg.cgls_iters);
        fill_metrics(cgls_row, cgls_recon, truth);
        if (s_i == 0) {
          maybe_write_png(cfg, ctx.run_id + "_truth", truth);
          maybe_write_png(cfg, ctx.run_id + "_cgls", cgls_recon);
        }
      } catch (const std::exception& e) {
        cgls_row.error = e.what();
      }
      try {
        SamplerConfig sc = cfg.sampler;
        sc.nfe = ctx.nfe;
        sc.gamma_schedule = ctx.gamma;
        sc.seed = sampler_seed(cfg, static_cast<std::uint64_t>(i));
        const NoiseSchedule schedule = build_schedule(cfg.noise_schedule_kind, cfg.total_steps);
        const auto denoiser = make_denoiser(ctx.prior, grid);
        const auto [dds_recon, traj] = dds_reconstruct(y, g, grid, *denoiser, schedule, sc);
        fill_metrics(dds_row, dds_recon, truth);
        maybe_write_png(cfg, ctx.run_id + "_dds", dds_recon);
      } catch (const std::exception& e) {
        dds_row.error = e.what();
      }
    } catch (const std::exception& e) {
      cgls_row.error = e.what();
      dds_row.error = e.what();
    }
    cells[i].rows = {cgls_row, dds_row};
  });

  return finalize_results(cfg, cells) == 0 ? 0 : 3;
}

int run_schedule_grid(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const int ng = static_cast<int>(cfg.gammas.size());
  const int nn = static_cast<int>(cfg.nfes.size());
  const int nv = static_cast<int>(cfg.views.size());
  const int ns = static_cast<int>(cfg.seeds.size());
  const int n_cells = ng * nn * nv * ns;

  std::vector<CellOutcome> cells(n_cells);
  parallel_for(n_cells, cfg.threads, [&](int i) {
    const int s_i = i % ns;
    const int v_i = (i / ns) % nv;
    const int n_i = (i / (ns * nv)) % nn;
    const int g_i = i / (ns * nv * nn);

    CellContext ctx{cfg,
                    run_id_for(cfg, i),
                    cfg.domains[0],
                    cfg.priors[0],
                    cfg.views[v_i],
                    cfg.grid_side,
                    cfg.nfes[n_i],
                    cfg.gammas[g_i],
                    cfg.seeds[s_i],
                    cfg.mismatch.enabled};
    Row row = base_row(ctx);
    row.algorithm = "dds";
    row.nfe = std::to_string(ctx.nfe);
    fill_gamma(row, ctx.gamma);

    try {
      const FanBeamGeometry g = make_geometry(ctx.n_views, cfg.span, cfg.scanner);
      const GridSpec grid = default_grid_spec(g, cfg.grid_side);
      const ImageGrid truth = domain_truth(ctx.domain, grid);

      Rng meas = measurement_rng(cfg, static_cast<std::uint64_t>(v_i));
      const Sinogram y =
          cfg.mismatch.enabled
              ? simulate_mismatched(ctx.domain, g, grid, cfg.mismatch, cfg.sampler.sigma_y,
                                    cfg.attenuation_per_unit, meas)
              : simulate_clean(truth, g, cfg.sampler.sigma_y, meas);

      SamplerConfig sc = cfg.sampler;
      sc.nfe = ctx.nfe;
      sc.gamma_schedule = ctx.gamma;
      sc.seed = sampler_seed(cfg, static_cast<std::uint64_t>(i));
      const NoiseSchedule schedule = build_schedule(cfg.noise_schedule_kind, cfg.total_steps);
      const auto denoiser = make_denoiser(ctx.prior, grid);
      const auto [recon, traj] = dds_reconstruct(y, g, grid, *denoiser, schedule, sc);
      fill_metrics(row, recon, truth);
      if (s_i == 0) maybe_write_png(cfg, ctx.run_id + "_dds", recon);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    cells[i].rows = {row};
  });

  return finalize_results(cfg, cells) == 0 ? 0 : 3;
}

int run_gap(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const int nr = static_cast<int>(cfg.resolutions.size());
  const int nv = static_cast<int>(cfg.views.size());
  const int ns = static_cast<int>(cfg.seeds.size());
  const int n_cells = nr * nv * ns;

  std::vector<CellOutcome> cells(n_cells);
  parallel_for(n_cells, cfg.threads, [&](int i) {
    const int s_i = i % ns;
    const int v_i = (i / ns) % nv;
    const int r_i = i / (ns * nv);
    const int res = cfg.resolutions[r_i];

    CellContext ctx{cfg,
                    run_id_for(cfg, i),
                    cfg.domains[0],
                    cfg.priors[0],
                    cfg.views[v_i],
                    res,
                    cfg.nfes[0],
                    cfg.gammas[0],
                    cfg.seeds[s_i],
                    false};
    Row clean_row = base_row(ctx);
    clean_row.algorithm = "dds";
    clean_row.nfe = std::to_string(ctx.nfe);
    fill_gamma(clean_row, ctx.gamma);
    Row mis_row = clean_row;
    mis_row.mismatch = "yes";

    try {
      const FanBeamGeometry g = make_geometry(ctx.n_views, cfg.span, cfg.scanner);
      const GridSpec grid = default_grid_spec(g, res);
      const ImageGrid truth = domain_truth(ctx.domain, grid);

      const std::uint64_t meas_key =
          static_cast<std::uint64_t>(r_i) * 10000 + static_cast<std::uint64_t>(v_i);
      Rng clean_rng = measurement_rng(cfg, meas_key * 2);
      Rng mis_rng = measurement_rng(cfg, meas_key * 2 + 1);
      const Sinogram y_clean = simulate_clean(truth, g, cfg.sampler.sigma_y, clean_rng);
      const Sinogram y_mis =
          simulate_mismatched(ctx.domain, g, grid, cfg.mismatch, cfg.sampler.sigma_y,
                              cfg.attenuation_per_unit, mis_rng);

      SamplerConfig sc = cfg.sampler;
      sc.nfe = ctx.nfe;
      sc.gamma_schedule = ctx.gamma;
      sc.seed = sampler_seed(cfg, static_cast<std::uint64_t>(i));
      const NoiseSchedule schedule = build_schedule(cfg.noise_schedule_kind, cfg.total_steps);
      const auto denoiser = make_denoiser(ctx.prior, grid);

      const auto [recon_clean, t1] = dds_reconstruct(y_clean, g, grid, *denoiser, schedule, sc);
      const auto [recon_mis, t2] = dds_reconstruct(y_mis, g, grid, *denoiser, schedule, sc);
      fill_metrics(clean_row, recon_clean, truth);
      fill_metrics(mis_row, recon_mis, truth);

      const int row_index = cfg.profile_row >= 0
                                ? cfg.profile_row
                                : static_cast<int>(std::lround(25.0 * res / 128.0));
      const auto emit_profile = [&](const char* kind, const ImageGrid& img) {
        const Eigen::VectorXd p = line_profile(img, row_index);
        for (Eigen::Index c = 0; c < p.size(); ++c)
          cells[i].profile_lines.push_back(ctx.run_id + ',' + std::to_string(res) + ',' +
                                           std::to_string(ctx.n_views) + ',' +
                                           std::to_string(ctx.seed) + ',' + kind + ',' +
                                           std::to_string(row_index) + ',' +
                                           std::to_string(c) + ',' +
                                           format_double(p[c]));
      };
      emit_profile("truth", truth);
      emit_profile("clean", recon_clean);
      emit_profile("mismatched", recon_mis);

      if (s_i == 0) {
        maybe_write_png(cfg, ctx.run_id + "_truth", truth);
        maybe_write_png(cfg, ctx.run_id + "_clean", recon_clean);
        maybe_write_png(cfg, ctx.run_id + "_mismatched", recon_mis);
      }
    } catch (const std::exception& e) {
      clean_row.error = e.what();
      mis_row.error = e.what();
    }
    cells[i].rows = {clean_row, mis_row};
  });

  std::string profiles = "run_id,resolution,n_views,seed,kind,row,col,value\n";
  for (const auto& cell : cells)
    for (const auto& line : cell.profile_lines) profiles += line + '\n';
  write_text(cfg.out_dir / "profiles.csv", profiles);

  return finalize_results(cfg, cells) == 0 ? 0 : 3;
}

int run_gen_dataset(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const auto samples_dir = cfg.out_dir / "samples";
  std::filesystem::create_directories(samples_dir);

  PerturbationConfig perturb_cfg = cfg.dataset.perturb;
  if (cfg.dataset.kind == "std") perturb_cfg.mix_pi = 0.0;
  if (cfg.dataset.kind == "exp") perturb_cfg.mix_pi = 1.0;

  const Rng rng(cfg.master_seed);
  const auto samples = sample_dataset(cfg.dataset.count, standard_shepp_logan(),
                                      experimental_shepp_logan(), perturb_cfg, rng);

  json file_list = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%06zu", i);
    json ellipses = json::array();
    for (const auto& e : samples[i].set.ellipses)
      ellipses.push_back(json{{"intensity", e.intensity},
                              {"a", e.semi_axis_a},
                              {"b", e.semi_axis_b},
                              {"x", e.center_x},
                              {"y", e.center_y},
                              {"phi_deg", e.rotation_phi_deg}});
    json sj{{"index", i},
            {"exp_branch", samples[i].exp_branch},
            {"sample_seed", samples[i].sample_seed},
            {"ellipses", ellipses}};
    write_text(samples_dir / (std::string(name) + ".json"), sj.dump(2) + "\n");
    file_list.push_back(std::string(name) + ".json");

    if (cfg.dataset.rasterize_samples) {
      const ImageGrid img = rasterize(samples[i].set, cfg.dataset.raster_side);
      write_image(samples_dir / (std::string(name) + ".cti"), img);
    }
  }

  json manifest{{"format", "ctlab-dataset-1"},
                {"kind", cfg.dataset.kind},
                {"seed", cfg.master_seed},
                {"count", cfg.dataset.count},
                {"pi", perturb_cfg.mix_pi},
                {"sigma_intensity", perturb_cfg.sigma_intensity},
                {"sigma_axes", perturb_cfg.sigma_axes},
                {"sigma_center", perturb_cfg.sigma_center},
                {"sigma_phi_deg", perturb_cfg.sigma_phi_deg},
                {"p_add_drop", perturb_cfg.p_add_drop},
                {"rasterized", cfg.dataset.rasterize_samples},
                {"raster_side", cfg.dataset.raster_side},
                {"version", kVersion},
                {"files", file_list}};
  write_text(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

int run_reconstruct(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  CellContext ctx{cfg,
                  run_id_for(cfg, 0),
                  cfg.domains[0],
                  cfg.priors[0],
                  cfg.views[0],
                  cfg.grid_side,
                  cfg.nfes[0],
                  cfg.gammas[0],
                  cfg.seeds[0],
                  cfg.mismatch.enabled};
  Row row = base_row(ctx);
  row.algorithm = "dds";
  row.nfe = std::to_string(ctx.nfe);
  fill_gamma(row, ctx.gamma);

  std::vector<CellOutcome> cells(1);
  try {
    const FanBeamGeometry g = make_geometry(ctx.n_views, cfg.span, cfg.scanner);
    const GridSpec grid = default_grid_spec(g, cfg.grid_side);
    const ImageGrid truth = domain_truth(ctx.domain, grid);

    Rng meas = measurement_rng(cfg, 0);
    const Sinogram y =
        cfg.mismatch.enabled
            ? simulate_mismatched(ctx.domain, g, grid, cfg.mismatch, cfg.sampler.sigma_y,
                                    cfg.attenuation_per_unit, meas)
            : simulate_clean(truth, g, cfg.sampler.sigma_y, meas);
    write_sinogram(cfg.out_dir / "measurement.cts", y);

    SamplerConfig sc = cfg.sampler;
    sc.nfe = ctx.nfe;
    sc.gamma_schedule = ctx.gamma;
    sc.seed = sampler_seed(cfg, 0);
    sc.snapshot_stride = cfg.snapshot_stride;
    const NoiseSchedule schedule = build_schedule(cfg.noise_schedule_kind, cfg.total_steps);
    const auto denoiser = make_denoiser(ctx.prior, grid);
    const auto [recon, traj] = dds_reconstruct(y, g, grid, *denoiser, schedule, sc);
    fill_metrics(row, recon, truth);

    traj.write_csv(cfg.out_dir / "trajectory.csv");
    if (cfg.snapshot_stride > 0) {
      const auto snap_dir = cfg.out_dir / "snapshots";
      std::filesystem::create_directories(snap_dir);
      for (const auto& s : traj.steps)
        if (s.snapshot) {
          char name[32];
          std::snprintf(name, sizeof(name), "step_%05d.cti", s.step);
          write_image(snap_dir / name, *s.snapshot);
        }
    }
    write_image(cfg.out_dir / "reconstruction.cti", recon);
    maybe_write_png(cfg, "reconstruction", recon);
    maybe_write_png(cfg, "truth", truth);
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  cells[0].rows = {row};
  return finalize_results(cfg, cells) == 0 ? 0 : 3;
}

int run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::gen_dataset: return run_gen_dataset(cfg);
    case ExperimentKind::sweep: return run_sweep(cfg);
    case ExperimentKind::schedule_grid: return run_schedule_grid(cfg);
    case ExperimentKind::gap: return run_gap(cfg);
    case ExperimentKind::reconstruct: return run_reconstruct(cfg);
  }
  throw ConfigError("unknown experiment kind");
}

}  // namespace ctlab
