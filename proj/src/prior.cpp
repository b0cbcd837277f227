#include "ctlab/prior.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctlab/image_ops.hpp"
#include "ctlab/io.hpp"

namespace ctlab {

ImageGrid ZeroDenoiser::predict_noise(const ImageGrid& x_t, int, const NoiseSchedule&) const {
  ImageGrid out = x_t;
  out.values.setZero();
  return out;
}

GaussianDenoiser::GaussianDenoiser(GaussianPriorParams params) : params_(std::move(params)) {
  if (!(params_.variance_tau2 > 0))
    throw std::invalid_argument("GaussianDenoiser: variance_tau2 must be > 0");
}

ImageGrid GaussianDenoiser::conditional_mean(const ImageGrid& x_t, double alpha_bar) const {
  require_same_shape(x_t, params_.mean_image, "GaussianDenoiser");
  const double tau2 = params_.variance_tau2;
  const double s = std::sqrt(alpha_bar);
  const double v = 1.0 - alpha_bar;
  const double denom = alpha_bar * tau2 + v;
  ImageGrid m = x_t;
  m.values = (tau2 * s * x_t.values + v * params_.mean_image.values) / denom;
  return m;
}

ImageGrid GaussianDenoiser::predict_noise(const ImageGrid& x_t, int t,
                                          const NoiseSchedule& schedule) const {
  const double ab = schedule.alpha_bar_at(t);
  ImageGrid out = x_t;
  if (ab >= 1.0) {  // noiseless limit
    out.values.setZero();
    return out;
  }
  const ImageGrid m = conditional_mean(x_t, ab);
  out.values = (x_t.values - std::sqrt(ab) * m.values) / std::sqrt(1.0 - ab);
  return out;
}

SmoothingDenoiser::SmoothingDenoiser(double sigma_max_px, double tau, double sigma_floor_px)
    : sigma_max_px_(sigma_max_px), tau_(tau), sigma_floor_px_(sigma_floor_px) {
  if (sigma_max_px < 0)
    throw std::invalid_argument("SmoothingDenoiser: sigma_max_px must be >= 0");
  if (!(tau > 0)) throw std::invalid_argument("SmoothingDenoiser: tau must be > 0");
  if (sigma_floor_px < 0)
    throw std::invalid_argument("SmoothingDenoiser: sigma_floor_px must be >= 0");
}

ImageGrid SmoothingDenoiser::predict_noise(const ImageGrid& x_t, int t,
                                           const NoiseSchedule& schedule) const {
  const double ab = schedule.alpha_bar_at(t);
  ImageGrid out = x_t;
  if (ab >= 1.0 || sigma_max_px_ == 0.0) {
    out.values.setZero();
    return out;
  }
  const double s = std::sqrt(ab);
  const double v = 1.0 - ab;
  // Denoised estimate x_hat = gain * blur(x_t): the blur width tracks the
  // noise std of x_t / sqrt(ab) and the gain is the scalar Wiener factor for
  // a prior of amplitude tau, so the estimate stays bounded as ab -> 0
  // instead of amplifying unconstrained image content by 1 / sqrt(ab). The
  // width floor keeps a mild streak suppression active on the low-noise
  // steps, where the ratio alone would switch the prior off entirely.
  const double sigma = std::min<double>(
      std::max(sigma_max_px_ * std::sqrt(v / ab), sigma_floor_px_), x_t.side_pixels);
  const double gain = tau_ * tau_ * s / (ab * tau_ * tau_ + v);
  const RowMatrix x_hat = gain * gaussian_blur(x_t.values, sigma);
  out.values = (x_t.values - s * x_hat) / std::sqrt(v);
  return out;
}

namespace {

std::filesystem::path make_work_dir() {
  static std::atomic<std::uint64_t> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ctlab-denoiser-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

void run_with_timeout(const std::string& exe, const std::vector<std::string>& args,
                      double timeout_seconds) {
  std::vector<char*> argv;
  argv.push_back(const_cast<char*>(exe.c_str()));
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("external denoiser: fork failed");
  if (pid == 0) {
    ::execvp(exe.c_str(), argv.data());
    ::_exit(127);
  }

  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw std::runtime_error("external denoiser: waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      throw std::runtime_error("external denoiser: timed out after " +
                               std::to_string(timeout_seconds) + " s");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw std::runtime_error("external denoiser: '" + exe + "' exited with status " +
                             std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
}

}  // namespace

ExternalDenoiser::ExternalDenoiser(std::string executable, double timeout_seconds)
    : executable_(std::move(executable)), timeout_seconds_(timeout_seconds) {
  if (executable_.empty())
    throw std::invalid_argument("ExternalDenoiser: executable path is empty");
  work_dir_ = make_work_dir().string();
}

ImageGrid ExternalDenoiser::predict_noise(const ImageGrid& x_t, int t,
                                          const NoiseSchedule& schedule) const {
  const std::filesystem::path dir(work_dir_);
  const auto x_path = dir / "x_t.cti";
  const auto meta_path = dir / "meta.json";
  const auto eps_path = dir / "epsilon.cti";

  write_image(x_path, x_t);
  nlohmann::json meta{{"t", t},
                      {"alpha_bar", schedule.alpha_bar_at(t)},
                      {"total_steps", schedule.total_steps}};
  std::ofstream(meta_path) << meta.dump(2) << "\n";
  std::error_code ec;
  std::filesystem::remove(eps_path, ec);

  run_with_timeout(executable_, {x_path.string(), meta_path.string(), eps_path.string()},
                   timeout_seconds_);

  ImageGrid eps = read_image(eps_path);
  if (eps.side_pixels != x_t.side_pixels)
    throw std::runtime_error("external denoiser: output shape does not match input");
  if (!eps.values.allFinite())
    throw std::runtime_error("external denoiser: output contains non-finite values");
  eps.pixel_size_mm = x_t.pixel_size_mm;
  return eps;
}

}  // namespace ctlab
