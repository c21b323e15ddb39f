#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "edidub/diffusion.hpp"

namespace edidub {

double cosine_alpha_bar(int t, int num_train_steps, double offset) {
  auto f = [&](double tt) {
    const double c = std::cos((tt / num_train_steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  return f(t) / f(0);
}

DiffusionSchedule build_cosine_schedule(int num_train_steps, int num_inference_steps, double offset) {
  require(num_train_steps > 0 && num_inference_steps > 0, "schedule step counts must be positive");
  require(num_inference_steps <= num_train_steps, "more inference steps than training steps");
  constexpr double kMaxBeta = 0.999;

  DiffusionSchedule s;
  s.num_train_steps = num_train_steps;
  s.offset = offset;
  s.alpha_bar.resize(num_train_steps + 1);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= num_train_steps; ++t) {
    const double ratio = cosine_alpha_bar(t, num_train_steps, offset) /
                         cosine_alpha_bar(t - 1, num_train_steps, offset);
    const double beta = std::min(1.0 - ratio, kMaxBeta);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
  }

  const int stride = num_train_steps / num_inference_steps;
  s.inference_steps.resize(num_inference_steps);
  for (int i = 0; i < num_inference_steps; ++i) s.inference_steps[i] = i * stride;
  return s;
}

void write_schedule(std::ostream& os, const DiffusionSchedule& s) {
  os << "num_train_steps " << s.num_train_steps << "\n";
  os << "offset " << std::setprecision(17) << s.offset << "\n";
  os << "inference_steps";
  for (int t : s.inference_steps) os << ' ' << t;
  os << "\n";
}

DiffusionSchedule read_schedule(std::istream& is) {
  int num_train = 0;
  double offset = 0.008;
  std::vector<int> steps;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "num_train_steps") {
      ls >> num_train;
    } else if (key == "offset") {
      ls >> offset;
    } else if (key == "inference_steps") {
      for (int t; ls >> t;) steps.push_back(t);
    } else {
      throw ConfigError("unknown schedule key: " + key);
    }
  }
  if (num_train <= 0 || steps.empty()) throw ConfigError("incomplete schedule file");
  DiffusionSchedule s = build_cosine_schedule(num_train, 1, offset);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 0 || steps[i] > num_train || (i > 0 && steps[i] <= steps[i - 1]))
      throw ConfigError("inference steps must be strictly increasing within range");
  }
  s.inference_steps = std::move(steps);
  return s;
}

}  // namespace edidub
