// Test fixture for the external denoiser protocol: reads x_t and the step
// metadata, writes epsilon = scale * x_t. Modes (via env):
//   SCALE_DENOISER_FACTOR   scale, default 0.5
//   SCALE_DENOISER_FAIL     non-empty: exit non-zero without output
//   SCALE_DENOISER_SLEEP_MS non-empty: sleep before answering (timeout tests)
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ctlab/io.hpp"

int main(int argc, char** argv) {
  if (argc != 4) return 64;
  if (std::getenv("SCALE_DENOISER_FAIL")) return 9;
  if (const char* ms = std::getenv("SCALE_DENOISER_SLEEP_MS"))
    std::this_thread::sleep_for(std::chrono::milliseconds(std::atoi(ms)));

  double factor = 0.5;
  if (const char* f = std::getenv("SCALE_DENOISER_FACTOR")) factor = std::atof(f);

  nlohmann::json meta;
  std::ifstream(argv[2]) >> meta;
  if (!meta.contains("t") || !meta.contains("alpha_bar")) return 65;

  ctlab::ImageGrid x = ctlab::read_image(argv[1]);
  x.values *= factor;
  ctlab::write_image(argv[3], x);
  return 0;
}
