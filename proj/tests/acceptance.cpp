// Acceptance checks: one PASS/FAIL line per criterion, with wall time.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sepseq/attention_math.hpp"
#include "sepseq/datagen.hpp"
#include "sepseq/format.hpp"
#include "sepseq/metrics.hpp"
#include "sepseq/pipeline.hpp"

using namespace sepseq;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::vector<std::string> notes;
    void require(bool cond, std::string what) {
        if (!cond) {
            ok = false;
            notes.push_back(std::move(what));
        }
    }
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.require(false, fmt::format("exception: {}", e.what()));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs < budget_s, fmt::format("took {:.2f} s, budget {:.0f} s", secs, budget_s));
    if (!o.ok) ++failures;
    fmt::print("{} {} ({:.0f} ms){}{}\n", o.ok ? "PASS" : "FAIL", name, secs * 1000.0, o.notes.empty() ? "" : ": ",
               fmt::format("{}", fmt::join(o.notes, "; ")));
    std::fflush(stdout);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Independent renderings used as oracles.
std::string reference_sepseq(const std::vector<std::string>& items, std::size_t k, const std::string& delim,
                             const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += items[i];
        if (i + 1 < items.size()) out += ((i + 1) % k == 0) ? sep : delim;
    }
    return out;
}

std::string naive(TaskType task, const std::vector<std::int64_t>& xs) {
    std::size_t best = 0;
    long last = -1;
    std::size_t ones = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (task == TaskType::max_int && xs[i] > xs[best]) best = i;
        if (task == TaskType::min_int && xs[i] < xs[best]) best = i;
        if (xs[i] == 1) {
            last = static_cast<long>(i);
            ++ones;
        }
    }
    if (task == TaskType::counting) return std::to_string(ones);
    if (task == TaskType::indexing) return std::to_string(last);
    return std::to_string(best);
}

RunConfig counting_run(const fs::path& out, const std::string& mock) {
    RunConfig c;
    c.endpoint.mock = mock;
    c.endpoint.model = "mock";
    c.runs = 10;
    c.concurrency = 8;
    DatasetSpec d;
    d.kind = DatasetSpec::Kind::generate;
    d.task = TaskType::counting;
    d.gen.task = TaskType::counting;
    d.gen.per_bin = 50;  // S, M, L, XL -> 200 samples
    d.gen.rng_seed = 11;
    c.datasets = {d};
    c.output_dir = out;
    return c;
}

}  // namespace

int main() {
    const auto scratch = fs::temp_directory_path() / "sepseq_acceptance";
    fs::remove_all(scratch);

    criterion("formatting: 10^4 random triples, substitution-only, ceil(n/k)-1 separators, round-trip, figure example",
              5.0, [](Outcome& o) {
                  const std::vector<std::int64_t> fig{0, 1, 0, 1, 0, 1, 0, 0, 0};
                  FormatConfig cfg;
                  cfg.segment_size = 4;
                  o.require(format_sepseq(NumericalSequence::from_integers(fig), cfg) == "0 1 0 1\n0 1 0 0\n0",
                            "figure example differs");
                  std::mt19937_64 gen(1);
                  const std::vector<SeparatorSymbol> seps{SeparatorSymbol::lf(), SeparatorSymbol::cr(),
                                                          SeparatorSymbol::crlf(), SeparatorSymbol::backslash(),
                                                          SeparatorSymbol::custom("|")};
                  for (int t = 0; t < 10000 && o.ok; ++t) {
                      const std::size_t n = 1 + gen() % 300, k = 1 + gen() % 40;
                      cfg.segment_size = k;
                      cfg.separator = seps[gen() % seps.size()];
                      std::vector<std::int64_t> raw(n);
                      for (auto& x : raw) x = static_cast<std::int64_t>(gen() % 20001) - 10000;
                      const auto seq = gen() % 2 ? NumericalSequence::from_scaled(raw, 3)
                                                 : NumericalSequence::from_integers(raw);
                      std::vector<std::string> items;
                      for (const auto& v : seq.values()) items.push_back(v.rendered());
                      const auto text = format_sepseq(seq, cfg);
                      o.require(text == reference_sepseq(items, k, " ", cfg.separator.text),
                                fmt::format("trial {} rendering", t));
                      const auto marked = reference_sepseq(items, k, " ", "\x01");
                      std::string restored;
                      for (char c : marked) restored += c == '\x01' ? std::string(" ") : std::string(1, c);
                      o.require(restored == format_vanilla(seq, " "), fmt::format("trial {} substitution", t));
                      o.require(static_cast<std::size_t>(std::count(marked.begin(), marked.end(), '\x01')) ==
                                        (n + k - 1) / k - 1 &&
                                    separator_count(n, k) == (n + k - 1) / k - 1,
                                fmt::format("trial {} separator count", t));
                      o.require(parse_formatted(text, cfg) == seq, fmt::format("trial {} round-trip", t));
                  }
              });

    criterion("oracle: worked examples and 10^4 random sequences per task", 10.0, [](Outcome& o) {
        const std::vector<std::int64_t> max_ex{3, 2, 2, 0, 3, 0, 2, 5, 0, 0, 1, 0, 1, 0, 1, 2, 0, 1, 4};
        const std::vector<std::int64_t> min_ex{6, 9, 7, 6, 7, 7, 6, 6, 6, 7, 9, 8, 7, 6, 6,
                                               8, 8, 8, 9, 2, 9, 9, 6, 9, 6, 8, 6, 9, 6};
        const std::vector<std::int64_t> bin_ex{1, 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
        o.require(oracle(TaskType::max_int, NumericalSequence::from_integers(max_ex)) == "7", "max_int example");
        o.require(oracle(TaskType::min_int, NumericalSequence::from_integers(min_ex)) == "19", "min_int example");
        o.require(oracle(TaskType::counting, NumericalSequence::from_integers(bin_ex)) == "4", "counting example");
        o.require(oracle(TaskType::indexing, NumericalSequence::from_integers(bin_ex)) == "8", "indexing example");
        std::mt19937_64 gen(2);
        for (auto task : {TaskType::max_int, TaskType::min_int, TaskType::counting, TaskType::indexing}) {
            const bool binary = task == TaskType::counting || task == TaskType::indexing;
            for (int t = 0; t < 10000; ++t) {
                std::vector<std::int64_t> xs(1 + gen() % 128);
                for (auto& x : xs) x = static_cast<std::int64_t>(gen() % (binary ? 2 : 10));
                if (oracle(task, NumericalSequence::from_integers(xs)) != naive(task, xs)) {
                    o.require(false, fmt::format("{} trial {}", to_string(task), t));
                    break;
                }
            }
        }
    });

    criterion("theorem: ratio 1 at equal logits, < 1 on 10^4 configurations, worked value, dispersion decreasing",
              5.0, [](Outcome& o) {
                  std::mt19937_64 gen(3);
                  std::uniform_real_distribution<double> logit(-5.0, 5.0), delta(0.01, 10.0);
                  for (int t = 0; t < 10000; ++t) {
                      std::vector<double> ctx(1 + gen() % 200);
                      for (auto& x : ctx) x = logit(gen);
                      const double s = logit(gen);
                      if (attention::cross_segment_ratio(ctx, s, s) != 1.0) {
                          o.require(false, fmt::format("equal-logit trial {}", t));
                          break;
                      }
                      if (!(attention::cross_segment_ratio(ctx, s, s + delta(gen)) < 1.0)) {
                          o.require(false, fmt::format("suppression trial {}", t));
                          break;
                      }
                  }
                  const double e = std::exp(1.0);
                  const std::vector<double> nine(9, 1.0);
                  const double r = attention::cross_segment_ratio(nine, 1.0, 5.0);
                  o.require(std::abs(r - 10.0 * e / (9.0 * e + std::exp(5.0))) < 1e-9, "closed form");
                  o.require(std::abs(r - 0.1572) < 1e-4, fmt::format("worked value {}", r));
                  std::vector<std::size_t> ns;
                  for (std::size_t n = 2; n <= 4096; ++n) ns.push_back(n);
                  for (double gap : {0.0, std::log(9.0), 4.0}) {
                      const auto curve = attention::dispersion_curve(ns, gap);
                      for (std::size_t i = 1; i < curve.size(); ++i) {
                          if (!(curve[i].max_weight < curve[i - 1].max_weight)) {
                              o.require(false, fmt::format("dispersion not decreasing at N={}", curve[i].n));
                              break;
                          }
                      }
                  }
              });

    criterion("metrics: 157/250, accuracy <= answer rate on fuzzed sets, reported relative changes", 5.0,
              [](Outcome& o) {
                  auto rec = [](std::size_t i, std::size_t run, bool valid, bool correct) {
                      RunRecord r;
                      r.sample_id = fmt::format("s{}", i);
                      r.run_index = run;
                      r.grade = GradeResult{valid, valid && correct, GradeReason::matched};
                      return r;
                  };
                  std::vector<RunRecord> rs;
                  for (std::size_t i = 0; i < 250; ++i) rs.push_back(rec(i, 0, true, i < 157));
                  o.require(accuracy(rs) == 157.0 / 250.0, "157/250");
                  o.require(fmt::format("{:.2f}", 100.0 * accuracy(rs)) == "62.80", "62.80%");
                  std::mt19937_64 gen(4);
                  const GroupField by[] = {GroupField::condition};
                  for (int t = 0; t < 10000; ++t) {
                      std::vector<RunRecord> set;
                      const std::size_t n = 1 + gen() % 20, runs = 1 + gen() % 3;
                      for (std::size_t run = 0; run < runs; ++run) {
                          for (std::size_t i = 0; i < n; ++i) set.push_back(rec(i, run, gen() % 3 != 0, gen() % 2));
                      }
                      const auto s = aggregate(set, by);
                      if (accuracy(set) > answer_rate(set) || s[0].accuracy_mean > s[0].answer_rate_mean) {
                          o.require(false, fmt::format("fuzz trial {}", t));
                          break;
                      }
                  }
                  o.require(std::abs(100.0 * relative_improvement(69.9, 51.6) - 35.6) <= 0.2, "+35.6%");
                  o.require(std::abs(100.0 * relative_improvement(2823.0, 3375.0) + 16.4) <= 0.05, "-16.4%");
              });

    criterion("end-to-end mock: error=0.2 -> 80% +- 4 pp, null rate=0.25 -> answer rate 75% +- 3 pp, "
              "byte-identical re-grade",
              60.0, [&](Outcome& o) {
                  const auto a = run_experiment(counting_run(scratch / "oracle", "oracle?error=0.2"));
                  o.require(a.graded.size() == 2000, fmt::format("{} records", a.graded.size()));
                  const auto& avg = a.report.average.at(0);
                  o.require(std::abs(avg.accuracy_mean - 0.8) <= 0.04,
                            fmt::format("accuracy {:.3f}", avg.accuracy_mean));
                  o.require(avg.answer_rate_mean == 1.0, fmt::format("answer rate {:.3f}", avg.answer_rate_mean));

                  const auto b = run_experiment(counting_run(scratch / "null", "null?rate=0.25"));
                  const auto& nb = b.report.average.at(0);
                  o.require(std::abs(nb.answer_rate_mean - 0.75) <= 0.03,
                            fmt::format("null answer rate {:.3f}", nb.answer_rate_mean));

                  for (const auto& dir : {scratch / "oracle", scratch / "null"}) {
                      const auto re = dir / "regrade";
                      fs::create_directories(re);
                      write_records(re / "graded.jsonl", grade_run_dir(dir));
                      const std::vector<ReportFormat> formats{ReportFormat::md, ReportFormat::csv,
                                                              ReportFormat::json};
                      report_from_graded(re / "graded.jsonl", formats, re);
                      for (const char* f : {"graded.jsonl", "report.md", "report.csv", "report.json"}) {
                          o.require(slurp(dir / f) == slurp(re / f),
                                    fmt::format("{} differs after re-grade of {}", f, dir.filename().string()));
                      }
                  }
              });

    criterion("repetition: 250 samples over five bins in [-10, 10]; corrupting mock 100% on S/M/L, 0-14% on XL/XXL",
              60.0, [&](Outcome& o) {
                  const auto corpus = generate(repetition_spec(0));
                  o.require(corpus.size() == 250, fmt::format("{} samples", corpus.size()));
                  std::map<std::string, int> per_bin;
                  for (const auto& s : corpus) {
                      ++per_bin[to_string(*s.bin)];
                      for (const auto& v : s.sequence->values()) {
                          if (v.precision() != 3 || v.mantissa() < -10000 || v.mantissa() > 10000) {
                              o.require(false, fmt::format("{} has value {}", s.id, v.rendered()));
                              break;
                          }
                      }
                  }
                  o.require(per_bin.size() == 5, "bins");
                  for (const auto& [bin, n] : per_bin) o.require(n == 50, fmt::format("bin {} has {}", bin, n));

                  RunConfig c;
                  c.endpoint.mock = "repeat";
                  c.endpoint.model = "mock";
                  c.runs = 1;
                  c.output_dir = scratch / "repeat";
                  const auto r = run_repetition(c);
                  for (const auto& s : r.report.by_bin) {
                      const auto bin = s.get("bin");
                      const double acc = s.accuracy_mean;
                      if (bin == "S" || bin == "M" || bin == "L") {
                          o.require(acc == 1.0, fmt::format("{} {:.1f}%", bin, 100 * acc));
                      } else {
                          o.require(acc >= 0.0 && acc <= 0.14, fmt::format("{} {:.1f}%", bin, 100 * acc));
                      }
                  }
                  o.require(r.report.by_bin.size() == 5, fmt::format("{} bin rows", r.report.by_bin.size()));
              });

    fmt::print("SKIP headline results: need a live endpoint and credentials; see README, \"Full grid against a "
               "live endpoint\"\n");

    fs::remove_all(scratch);
    return failures == 0 ? 0 : 1;
}
