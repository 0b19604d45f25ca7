// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "jeffreys/config.hpp"
#include "jeffreys/experiment.hpp"
#include "jeffreys/probe.hpp"
#include "jeffreys/selftest.hpp"

namespace fs = std::filesystem;
using namespace jeffreys;
using nlohmann::json;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s  %d  %s  (%s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

selftest::Options options() {
  selftest::Options o;
  o.posterior_samples = 10000;
  o.uniform_samples = 1000;
  o.loss_grad_cases = 120;
  o.network_grad_cases = 100;
  o.metric_sets = 100;
  o.kl_cases = 500;
  return o;
}

const DomainSummary& at(const ExperimentReport& r, const std::string& variant, const std::string& domain) {
  return r.summary.at(variant).at(domain);
}

struct Ordering {
  bool ok = true;
  std::string detail;
};

// Jeffreys <= LS <= CE on strong-shift EER, Jeffreys minDCF <= CE minDCF on
// every domain. Medians over seeds.
Ordering directional(const ExperimentReport& r) {
  const std::string jef = "ce_jeffreys";
  const std::string ls = "ce_ls";
  const std::string ce = "ce+wd";
  const std::string strong = r.config.domains.back().tag;
  const double ej = at(r, jef, strong).median_eer;
  const double el = at(r, ls, strong).median_eer;
  const double ec = at(r, ce, strong).median_eer;
  Ordering o;
  o.ok = ej <= el && el <= ec;
  o.detail = fmt("strong EER jef %.4f ls %.4f ce %.4f", ej, el, ec);
  for (const auto& d : r.config.domains) {
    const double dj = at(r, jef, d.tag).median_min_dcf;
    const double dc = at(r, ce, d.tag).median_min_dcf;
    o.ok = o.ok && dj <= dc;
    o.detail += "; " + d.tag + fmt(" minDCF jef %.4f ce %.4f", dj, dc);
  }
  return o;
}

std::vector<std::uint64_t> iota_seeds(std::uint64_t n) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 1; i <= n; ++i) s.push_back(i);
  return s;
}

json strip_timestamp(json j) {
  j.erase("generated_at");
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  const selftest::Options o = options();

  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = selftest::check_jeffreys_equivalence(o);
    const double s = since(t0);
    report(1, r.passed && r.cases >= 10000 && s < 5.0, "direct Jeffreys divergence equals LS + entropy form",
           fmt("%.0f posteriors, K in {2,3,10,100,512}, worst |diff| at %.3g of bound, %.2f s", r.cases, r.worst, s));
  }

  {
    const auto a = selftest::check_jeffreys_nonnegative(o);
    const auto b = selftest::check_jeffreys_uniform_zero(o);
    report(2, a.passed && b.passed && a.cases >= 10000 && b.cases >= 1000, "Jeffreys loss nonnegative, zero on uniform non-targets",
           fmt("min violation %.3g, worst |J| on uniform %.3g, %.0f cases", a.worst, b.worst, a.cases + b.cases));
  }

  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto a = selftest::check_loss_gradient(o);
    const auto b = selftest::check_network_gradient(o);
    const double s = since(t0);
    report(3, a.passed && b.passed && a.cases >= 100 && b.cases >= 100 && s < 30.0,
           "analytic gradients match central differences",
           fmt("loss-level worst %.3g (tol 1e-6), network-level worst %.3g (tol 1e-5), %.2f s", a.worst, b.worst, s));
  }

  {
    const auto r = selftest::check_reductions(o);
    report(4, r.passed, "weight reductions: (a,a) gives CE + aJ, beta=0 gives CE + aLS",
           fmt("worst relative %.3g over %.0f posteriors", r.worst, r.cases));
  }

  {
    const auto r = selftest::check_metrics(o);
    report(5, r.passed && r.cases >= 101, "EER and minDCF equal the exhaustive sweep oracle",
           fmt("worst |diff| %.3g over %.0f score sets incl. the 6-score example", r.worst, r.cases));
  }

  // The directional experiment and the probe trend share the default-config runs.
  ExperimentConfig cfg = default_config();
  const fs::path tmp = fs::temp_directory_path() / "jeffreys_acceptance";
  fs::remove_all(tmp);
  {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.seeds = iota_seeds(5);
    ExperimentReport rep = run_experiment(cfg);
    Ordering ord = directional(rep);
    std::string note = "5 seeds";
    if (!ord.ok) {
      std::printf("       5-seed medians: %s; enlarging to 9 seeds\n", ord.detail.c_str());
      ExperimentConfig big = cfg;
      big.seeds = iota_seeds(9);
      rep = run_experiment(big);
      ord = directional(rep);
      note = "9 seeds";
    }
    const double s = since(t0);
    report(6, ord.ok && s < 600.0, "default benchmark directional ordering", note + "; " + ord.detail + fmt("; %.1f s", s));

    bool ok = true;
    std::string detail;
    for (const auto& v : cfg.variants) {
      std::vector<double> tops;
      std::vector<double> eers;
      for (const auto& d : cfg.domains) {
        tops.push_back(at(rep, v.name(), d.tag).median_mean_top_count);
        eers.push_back(at(rep, v.name(), d.tag).median_eer);
      }
      const double rho = spearman(tops, eers);
      ok = ok && tops.back() > tops.front() && rho > 0.0;
      detail += (detail.empty() ? "" : "; ") + v.name() + fmt(" top %.2f -> %.2f rho %.2f", tops.front(), tops.back(), rho);
    }
    report(7, ok, "top-speaker count grows with shift and tracks EER", detail);
  }

  {
    const auto r = selftest::check_kl_gap(o);
    report(8, r.passed, "mean KL gap equals expected log ratio", fmt("worst |diff| %.3g over %.0f sets", r.worst, r.cases));
  }

  {
    const fs::path a = tmp / "a";
    const fs::path b = tmp / "b";
    const std::string bin = JEFFREYS_LAB_BIN;
    const int ra = std::system((bin + " run-experiment -o " + a.string() + " > /dev/null").c_str());
    const int rb = std::system((bin + " run-experiment -o " + b.string() + " > /dev/null").c_str());
    bool same = ra == 0 && rb == 0;
    std::size_t compared = 0;
    if (same) {
      same = strip_timestamp(json::parse(slurp(a / "report.json"))) == strip_timestamp(json::parse(slurp(b / "report.json")));
      for (const auto& e : fs::recursive_directory_iterator(a / "runs")) {
        if (!e.is_regular_file()) continue;
        same = same && slurp(e.path()) == slurp(b / fs::relative(e.path(), a));
        ++compared;
      }
    }
    report(9, same, "two identical run-experiment executions give identical outputs",
           fmt("exit codes %.0f/%.0f, report plus %.0f run artifacts compared", ra, rb, static_cast<double>(compared)));
  }
  fs::remove_all(tmp);

  std::printf("%s: %d criterion(s) failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
