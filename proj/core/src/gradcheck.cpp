#include "fdq/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "fdq/error.hpp"

namespace fdq {

template <typename T>
GradCheckReport fd_check(const BasicLossBuilder<T>& build, std::span<BasicParameter<T>* const> params,
                         double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("fd_check: epsilon must be positive");
  for (auto* p : params) p->grad.fill(T(0));

  BasicTape<T> tape;
  BasicVar<T> loss = build(tape);
  tape.backward(loss);

  GradCheckReport report;
  for (auto* p : params) {
    const std::vector<T> analytic(p->grad.data().begin(), p->grad.data().end());
    double diff_sq = 0.0, ad_sq = 0.0, fd_sq = 0.0;
    auto values = p->value.data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const T saved = values[k];
      values[k] = static_cast<T>(saved + epsilon);
      const double up = build(tape).item();
      tape.clear();
      values[k] = static_cast<T>(saved - epsilon);
      const double down = build(tape).item();
      tape.clear();
      values[k] = saved;
      const double fd = (up - down) / (2.0 * epsilon);
      const double ad = analytic[k];
      diff_sq += (ad - fd) * (ad - fd);
      ad_sq += ad * ad;
      fd_sq += fd * fd;
    }
    const double err = std::sqrt(diff_sq) / (std::sqrt(ad_sq) + std::sqrt(fd_sq) + 1e-8);
    if (report.worst.empty() || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst = p->name;
    }
    p->grad.fill(T(0));
  }
  return report;
}

template GradCheckReport fd_check<float>(const BasicLossBuilder<float>&, std::span<BasicParameter<float>* const>,
                                         double);
template GradCheckReport fd_check<double>(const BasicLossBuilder<double>&, std::span<BasicParameter<double>* const>,
                                          double);

}  // namespace fdq
