// Copyright 2026 The DDME Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ddme/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>

#include "ddme/error.hpp"
#include "ddme/io.hpp"
#include "ddme/rng.hpp"

namespace ddme {

std::string_view run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::baseline: return "baseline";
    case RunMode::ddme_single: return "ddme_single";
    case RunMode::ddme_full: return "ddme_full";
  }
  return "?";
}

RunMode run_mode_from_name(std::string_view name) {
  if (name == "baseline") return RunMode::baseline;
  if (name == "ddme_single") return RunMode::ddme_single;
  if (name == "ddme_full") return RunMode::ddme_full;
  throw Error("unknown run mode '" + std::string(name) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

class Parser {
 public:
  explicit Parser(std::vector<std::string>& errors) : errors_(errors) {}

  void fail(const std::string& key, const std::string& what) {
    errors_.push_back(key + ": " + what);
  }

  bool to_i64(const std::string& key, std::string_view v, std::int64_t& out) {
    const auto* begin = v.data();
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) {
      fail(key, "expected an integer, got '" + std::string(v) + "'");
      return false;
    }
    return true;
  }

  bool to_u64(const std::string& key, std::string_view v, std::uint64_t& out) {
    const auto* begin = v.data();
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) {
      fail(key, "expected a non-negative integer, got '" + std::string(v) + "'");
      return false;
    }
    return true;
  }

  bool to_f64(const std::string& key, std::string_view v, double& out) {
    try {
      std::size_t used = 0;
      out = std::stod(std::string(v), &used);
      if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument("");
      return true;
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + std::string(v) + "'");
      return false;
    }
  }

  bool to_bool(const std::string& key, std::string_view v, bool& out) {
    if (v == "true" || v == "1" || v == "on") {
      out = true;
      return true;
    }
    if (v == "false" || v == "0" || v == "off") {
      out = false;
      return true;
    }
    fail(key, "expected true/false, got '" + std::string(v) + "'");
    return false;
  }

 private:
  std::vector<std::string>& errors_;
};

std::string u64s(std::uint64_t v) { return std::to_string(v); }
std::string f64s(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

SyntheticSpec PipelineConfig::effective_synth() const {
  SyntheticSpec s = synth;
  if (!synth_seed_set) s.seed = derive_seed(seed, "synthetic-corpus");
  return s;
}

double PipelineConfig::resolve_m(double historical_mass) const {
  return m_absolute > 0 ? m_absolute : m_fraction * historical_mass;
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::resolved()
    const {
  std::vector<std::pair<std::string, std::string>> kv;
  auto add = [&](std::string k, std::string v) {
    kv.emplace_back(std::move(k), std::move(v));
  };
  add("paths.out_dir", out_dir.string());
  add("paths.train_data", train_data.string());
  add("paths.eval_data", eval_data.string());
  add("paths.label_space", label_space_file.string());
  add("paths.annotations", annotations.string());
  add("synth.enabled", synth_enabled ? "true" : "false");
  add("synth.n_queries", std::to_string(synth.n_queries));
  add("synth.k_categories", std::to_string(synth.k_categories));
  add("synth.zipf_exponent", f64s(synth.zipf_exponent));
  add("synth.vocab_size", std::to_string(synth.vocab_size));
  add("synth.tail_label_dropout", f64s(synth.tail_label_dropout));
  add("synth.seed", synth_seed_set ? u64s(synth.seed) : std::string("auto"));
  const auto add_feat = [&](const char* prefix, const FeaturizerConfig& f) {
    const std::string p(prefix);
    add(p + ".buckets", u64s(f.bucket_count));
    add(p + ".word_ngram_max", std::to_string(f.word_ngram_max));
    add(p + ".char_ngram_min", std::to_string(f.char_ngram_min));
    add(p + ".char_ngram_max", std::to_string(f.char_ngram_max));
    add(p + ".min_word_count", std::to_string(f.min_word_count));
    add(p + ".lowercase", f.lowercase ? "true" : "false");
  };
  add_feat("featurizer", featurizer);
  add_feat("expert_featurizer", expert_featurizer);
  add("student.dim", std::to_string(student.dim));
  add("student.epochs", std::to_string(student.epochs));
  add("student.learning_rate", f64s(student.learning_rate));
  add("student.negative_mode",
      student.negative_mode == NegativeMode::full_sigmoid ? "full_sigmoid"
                                                          : "sampled");
  add("student.negative_samples", std::to_string(student.negative_samples));
  add("student.weight_mode",
      student.weight_mode == WeightMode::log_pv ? "log_pv" : "uniform");
  add("student.threads", std::to_string(student.threads));
  add("expert.embed_dim", std::to_string(expert.embed_dim));
  add("expert.hidden_dim", std::to_string(expert.hidden_dim));
  add("expert.epochs", std::to_string(expert.epochs));
  add("expert.batch_size", std::to_string(expert.batch_size));
  add("expert.learning_rate", f64s(expert.learning_rate));
  add("expert.negative_scheme",
      expert.scheme == NegativeWeightScheme::literal ? "literal" : "smoothed");
  add("expert.alpha", f64s(expert.alpha));
  add("distill.tau", f64s(tau));
  add("distill.m_cap", std::to_string(m_cap));
  add("distill.m_fraction", f64s(m_fraction));
  add("distill.m_absolute", f64s(m_absolute));
  add("distill.zero_prior_floor", f64s(zero_prior_floor));
  add("eval.band_low", f64s(bands.q_low));
  add("eval.band_high", f64s(bands.q_high));
  add("eval.topk", std::to_string(eval_topk));
  add("eval.threshold", f64s(eval_threshold));
  add("run.mode", std::string(run_mode_name(mode)));
  add("run.seed", u64s(seed));
  add("run.deterministic", deterministic ? "true" : "false");
  std::string seeds;
  for (std::size_t i = 0; i < experiment_seeds.size(); ++i) {
    if (i > 0) seeds.push_back(',');
    seeds += u64s(experiment_seeds[i]);
  }
  add("experiment.seeds", seeds);
  std::sort(kv.begin(), kv.end());
  return kv;
}

PipelineConfig parse_config(std::string_view text, std::string_view source) {
  std::vector<std::string> errors;
  Parser p(errors);
  PipelineConfig cfg;
  bool expert_word_ngram_set = false;
  bool expert_buckets_set = false;
  bool expert_char_min_set = false;
  bool expert_char_max_set = false;
  bool expert_minword_set = false;
  bool expert_lower_set = false;

  using Handler = std::function<void(const std::string&, std::string_view)>;
  const std::map<std::string, Handler, std::less<>> handlers = {
      {"paths.out_dir", [&](const std::string&, std::string_view v) { cfg.out_dir = std::string(v); }},
      {"paths.train_data", [&](const std::string&, std::string_view v) { cfg.train_data = std::string(v); }},
      {"paths.eval_data", [&](const std::string&, std::string_view v) { cfg.eval_data = std::string(v); }},
      {"paths.label_space", [&](const std::string&, std::string_view v) { cfg.label_space_file = std::string(v); }},
      {"paths.annotations", [&](const std::string&, std::string_view v) { cfg.annotations = std::string(v); }},
      {"synth.enabled", [&](const std::string& k, std::string_view v) { p.to_bool(k, v, cfg.synth_enabled); }},
      {"synth.n_queries", [&](const std::string& k, std::string_view v) { p.to_i64(k, v, cfg.synth.n_queries); }},
      {"synth.k_categories",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.synth.k_categories = static_cast<std::int32_t>(x);
       }},
      {"synth.zipf_exponent", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.synth.zipf_exponent); }},
      {"synth.vocab_size",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.synth.vocab_size = static_cast<std::int32_t>(x);
       }},
      {"synth.tail_label_dropout", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.synth.tail_label_dropout); }},
      {"synth.seed",
       [&](const std::string& k, std::string_view v) {
         if (p.to_u64(k, v, cfg.synth.seed)) cfg.synth_seed_set = true;
       }},
      {"featurizer.buckets", [&](const std::string& k, std::string_view v) { p.to_u64(k, v, cfg.featurizer.bucket_count); }},
      {"featurizer.word_ngram_max",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.featurizer.word_ngram_max = static_cast<int>(x);
       }},
      {"featurizer.char_ngram_min",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.featurizer.char_ngram_min = static_cast<int>(x);
       }},
      {"featurizer.char_ngram_max",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.featurizer.char_ngram_max = static_cast<int>(x);
       }},
      {"featurizer.min_word_count",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.featurizer.min_word_count = static_cast<int>(x);
       }},
      {"featurizer.lowercase", [&](const std::string& k, std::string_view v) { p.to_bool(k, v, cfg.featurizer.lowercase); }},
      {"expert_featurizer.buckets",
       [&](const std::string& k, std::string_view v) {
         if (p.to_u64(k, v, cfg.expert_featurizer.bucket_count)) expert_buckets_set = true;
       }},
      {"expert_featurizer.word_ngram_max",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) {
           cfg.expert_featurizer.word_ngram_max = static_cast<int>(x);
           expert_word_ngram_set = true;
         }
       }},
      {"expert_featurizer.char_ngram_min",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) {
           cfg.expert_featurizer.char_ngram_min = static_cast<int>(x);
           expert_char_min_set = true;
         }
       }},
      {"expert_featurizer.char_ngram_max",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) {
           cfg.expert_featurizer.char_ngram_max = static_cast<int>(x);
           expert_char_max_set = true;
         }
       }},
      {"expert_featurizer.min_word_count",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) {
           cfg.expert_featurizer.min_word_count = static_cast<int>(x);
           expert_minword_set = true;
         }
       }},
      {"expert_featurizer.lowercase",
       [&](const std::string& k, std::string_view v) {
         if (p.to_bool(k, v, cfg.expert_featurizer.lowercase)) expert_lower_set = true;
       }},
      {"student.dim",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.student.dim = static_cast<int>(x);
       }},
      {"student.epochs",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.student.epochs = static_cast<int>(x);
       }},
      {"student.learning_rate", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.student.learning_rate); }},
      {"student.negative_mode",
       [&](const std::string& k, std::string_view v) {
         if (v == "full_sigmoid") {
           cfg.student.negative_mode = NegativeMode::full_sigmoid;
         } else if (v == "sampled") {
           cfg.student.negative_mode = NegativeMode::sampled;
         } else {
           p.fail(k, "expected full_sigmoid or sampled");
         }
       }},
      {"student.negative_samples",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.student.negative_samples = static_cast<int>(x);
       }},
      {"student.weight_mode",
       [&](const std::string& k, std::string_view v) {
         if (v == "log_pv") {
           cfg.student.weight_mode = WeightMode::log_pv;
         } else if (v == "uniform") {
           cfg.student.weight_mode = WeightMode::uniform;
         } else {
           p.fail(k, "expected log_pv or uniform");
         }
       }},
      {"student.threads",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.student.threads = static_cast<int>(x);
       }},
      {"expert.embed_dim",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.expert.embed_dim = static_cast<int>(x);
       }},
      {"expert.hidden_dim",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.expert.hidden_dim = static_cast<int>(x);
       }},
      {"expert.epochs",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.expert.epochs = static_cast<int>(x);
       }},
      {"expert.batch_size",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.expert.batch_size = static_cast<int>(x);
       }},
      {"expert.learning_rate", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.expert.learning_rate); }},
      {"expert.negative_scheme",
       [&](const std::string& k, std::string_view v) {
         if (v == "literal") {
           cfg.expert.scheme = NegativeWeightScheme::literal;
         } else if (v == "smoothed") {
           cfg.expert.scheme = NegativeWeightScheme::smoothed;
         } else {
           p.fail(k, "expected literal or smoothed");
         }
       }},
      {"expert.alpha", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.expert.alpha); }},
      {"distill.tau", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.tau); }},
      {"distill.m_cap",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.m_cap = static_cast<int>(x);
       }},
      {"distill.m_fraction", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.m_fraction); }},
      {"distill.m_absolute", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.m_absolute); }},
      {"distill.zero_prior_floor", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.zero_prior_floor); }},
      {"eval.band_low", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.bands.q_low); }},
      {"eval.band_high", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.bands.q_high); }},
      {"eval.topk",
       [&](const std::string& k, std::string_view v) {
         std::int64_t x;
         if (p.to_i64(k, v, x)) cfg.eval_topk = static_cast<int>(x);
       }},
      {"eval.threshold", [&](const std::string& k, std::string_view v) { p.to_f64(k, v, cfg.eval_threshold); }},
      {"run.mode",
       [&](const std::string& k, std::string_view v) {
         try {
           cfg.mode = run_mode_from_name(v);
         } catch (const Error&) {
           p.fail(k, "expected baseline, ddme_single or ddme_full");
         }
       }},
      {"run.seed", [&](const std::string& k, std::string_view v) { p.to_u64(k, v, cfg.seed); }},
      {"run.deterministic", [&](const std::string& k, std::string_view v) { p.to_bool(k, v, cfg.deterministic); }},
      {"experiment.seeds",
       [&](const std::string& k, std::string_view v) {
         std::vector<std::uint64_t> seeds;
         std::string_view rest = v;
         if (rest.empty()) {
           p.fail(k, "expected a comma-separated seed list");
           return;
         }
         bool ok = true;
         while (ok && !rest.empty()) {
           const std::size_t comma = rest.find(',');
           std::string_view item = trim(rest.substr(0, comma));
           rest = (comma == std::string_view::npos) ? std::string_view{}
                                                    : rest.substr(comma + 1);
           std::uint64_t s;
           if (!p.to_u64(k, item, s)) {
             ok = false;
             break;
           }
           seeds.push_back(s);
         }
         if (!ok) return;
         if (seeds.empty()) {
           p.fail(k, "expected a comma-separated seed list");
           return;
         }
         cfg.experiment_seeds = std::move(seeds);
       }},
  };

  // parse lines
  std::size_t begin = 0;
  std::size_t line_no = 0;
  while (begin <= text.size()) {
    const std::size_t end = text.find('\n', begin);
    std::string_view raw =
        text.substr(begin, (end == std::string_view::npos ? text.size() : end) - begin);
    begin = (end == std::string_view::npos) ? text.size() + 1 : end + 1;
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back(std::string(source) + ":" + std::to_string(line_no) +
                       ": expected 'key = value'");
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = handlers.find(key);
    if (it == handlers.end()) {
      errors.push_back("unknown key '" + key + "' (" + std::string(source) +
                       ":" + std::to_string(line_no) + ")");
      continue;
    }
    it->second(key, value);
  }

  // expert featurizer inherits the student featurizer; the default expert
  // view is unigram + char n-grams
  if (!expert_buckets_set) cfg.expert_featurizer.bucket_count = cfg.featurizer.bucket_count;
  if (!expert_word_ngram_set) cfg.expert_featurizer.word_ngram_max = 1;
  if (!expert_char_min_set) cfg.expert_featurizer.char_ngram_min = cfg.featurizer.char_ngram_min;
  if (!expert_char_max_set) cfg.expert_featurizer.char_ngram_max = cfg.featurizer.char_ngram_max;
  if (!expert_minword_set) cfg.expert_featurizer.min_word_count = cfg.featurizer.min_word_count;
  if (!expert_lower_set) cfg.expert_featurizer.lowercase = cfg.featurizer.lowercase;

  // range checks (collected, not thrown piecemeal)
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  check(cfg.synth_enabled || !cfg.train_data.empty(),
        "no data source: set synth.enabled or paths.train_data");
  if (cfg.synth_enabled) {
    check(cfg.synth.n_queries >= 1, "synth.n_queries must be >= 1");
    check(cfg.synth.k_categories >= 1, "synth.k_categories must be >= 1");
    check(cfg.synth.zipf_exponent > 0, "synth.zipf_exponent must be > 0");
    check(cfg.synth.vocab_size >= 1, "synth.vocab_size must be >= 1");
    check(cfg.synth.tail_label_dropout >= 0 && cfg.synth.tail_label_dropout <= 1,
          "synth.tail_label_dropout must be in [0,1]");
  }
  for (const auto& [name, f] :
       {std::pair<const char*, const FeaturizerConfig*>{"featurizer", &cfg.featurizer},
        {"expert_featurizer", &cfg.expert_featurizer}}) {
    const std::string prefix(name);
    check(f->bucket_count >= 2, prefix + ".buckets must be >= 2");
    check(f->word_ngram_max >= 1, prefix + ".word_ngram_max must be >= 1");
    check(f->char_ngram_min >= 1 && f->char_ngram_min <= f->char_ngram_max,
          prefix + ": need 1 <= char_ngram_min <= char_ngram_max");
    check(f->min_word_count >= 1, prefix + ".min_word_count must be >= 1");
  }
  check(cfg.student.dim >= 1, "student.dim must be >= 1");
  check(cfg.student.epochs >= 1, "student.epochs must be >= 1");
  check(cfg.student.learning_rate > 0, "student.learning_rate must be > 0");
  check(cfg.student.negative_samples >= 1, "student.negative_samples must be >= 1");
  check(cfg.student.threads >= 1, "student.threads must be >= 1");
  check(cfg.expert.embed_dim >= 1, "expert.embed_dim must be >= 1");
  check(cfg.expert.hidden_dim >= 1, "expert.hidden_dim must be >= 1");
  check(cfg.expert.epochs >= 1, "expert.epochs must be >= 1");
  check(cfg.expert.batch_size >= 1, "expert.batch_size must be >= 1");
  check(cfg.expert.learning_rate > 0, "expert.learning_rate must be > 0");
  check(cfg.expert.alpha > 0, "expert.alpha must be > 0");
  check(cfg.tau > 0 && cfg.tau < 1, "distill.tau must be in (0,1)");
  check(cfg.m_cap >= 1, "distill.m_cap must be >= 1");
  check(cfg.m_absolute > 0 || cfg.m_fraction > 0,
        "M must be positive: set distill.m_fraction or distill.m_absolute > 0");
  check(cfg.m_absolute >= 0, "distill.m_absolute must be >= 0");
  check(cfg.zero_prior_floor > 0, "distill.zero_prior_floor must be > 0");
  check(cfg.bands.q_low > 0 && cfg.bands.q_low < cfg.bands.q_high &&
            cfg.bands.q_high < 1,
        "eval bands: need 0 < band_low < band_high < 1");
  check(cfg.eval_topk >= 1, "eval.topk must be >= 1");
  check(cfg.eval_threshold >= 0 && cfg.eval_threshold <= 1,
        "eval.threshold must be in [0,1]");
  check(!cfg.experiment_seeds.empty(), "experiment.seeds must not be empty");

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

}  // namespace ddme
