#include "iclkit/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "iclkit/interchange.hpp"
#include "iclkit/random.hpp"
#include "iclkit/synth.hpp"
#include "iclkit/text_metrics.hpp"

namespace iclkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// ------------------------------------------------------------------- config

void PipelineConfig::validate() const {
  if (shots == 0) throw ConfigError("shots must be at least 1");
  for (const auto* p : {&paths.captions, &paths.embeddings, &paths.embedding_ids, &paths.text_embeddings,
                        &paths.text_embedding_ids, &paths.run, &paths.lexicon}) {
    if (*p && !fs::exists(**p)) throw ConfigError("configured path does not exist: " + (*p)->string());
  }
}

fs::path PipelineConfig::demos_path() const { return paths.demos.value_or(paths.out / "demos.json"); }

PipelineConfig pipeline_config_from_text(const std::string& text, const fs::path& base_dir) {
  PipelineConfig cfg;
  cfg.raw = text;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    if (doc.contains("retrieval")) cfg.retrieval = method_from_name(doc.at("retrieval").get<std::string>());
    if (doc.contains("caption_source")) cfg.caption_source = source_from_name(doc.at("caption_source").get<std::string>());
    if (doc.contains("mhl_anchor")) cfg.mhl_anchor = source_from_name(doc.at("mhl_anchor").get<std::string>());
    cfg.shots = doc.value("shots", cfg.shots);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.queries = doc.value("queries", std::vector<std::string>{});
    if (auto m = doc.find("metrics"); m != doc.end()) {
      cfg.metrics.cider = m->value("cider", true);
      cfg.metrics.clipscore = m->value("clipscore", true);
      cfg.metrics.chair = m->value("chair", true);
      cfg.metrics.shortcut = m->value("shortcut", true);
      cfg.metrics.attention = m->value("attention", true);
    }
    if (doc.contains("template")) cfg.prompt = prompt_template_from_json(doc.at("template"));
    if (auto p = doc.find("paths"); p != doc.end()) {
      auto path = [&](const char* key, std::optional<fs::path>& slot) {
        if (auto it = p->find(key); it != p->end() && !it->is_null()) slot = base_dir / it->get<std::string>();
      };
      path("captions", cfg.paths.captions);
      path("embeddings", cfg.paths.embeddings);
      path("embedding_ids", cfg.paths.embedding_ids);
      path("text_embeddings", cfg.paths.text_embeddings);
      path("text_embedding_ids", cfg.paths.text_embedding_ids);
      path("run", cfg.paths.run);
      path("lexicon", cfg.paths.lexicon);
      path("demos", cfg.paths.demos);
      if (p->contains("out")) cfg.paths.out = base_dir / p->at("out").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.paths.embeddings && !cfg.paths.embedding_ids) {
    throw ConfigError("config: paths.embeddings needs paths.embedding_ids");
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return pipeline_config_from_text(ss.str(), path.parent_path());
}

// -------------------------------------------------------------------- build

BuildResult run_build(const PipelineConfig& cfg) {
  cfg.validate();
  if (!cfg.paths.captions) throw ConfigError("build needs paths.captions");
  const CaptionDataset dataset = load_caption_dataset(*cfg.paths.captions);

  std::optional<EmbeddingTable> table;
  if (cfg.paths.embeddings) table = load_embedding_table(*cfg.paths.embeddings, *cfg.paths.embedding_ids);
  if (cfg.retrieval == RetrievalMethod::SIIR && !table) throw ConfigError("SIIR retrieval needs paths.embeddings");

  std::vector<std::string> pool;
  if (table) {
    pool = table->ids();
  } else {
    for (const auto& [id, caps] : dataset.images()) pool.push_back(id);
  }
  const std::vector<std::string> queries = cfg.queries.empty() ? pool : cfg.queries;
  const std::set<std::string> pool_set(pool.begin(), pool.end());
  for (const auto& q : queries) {
    if (!pool_set.contains(q)) throw ConfigError("query '" + q + "' is not in the retrieval pool");
  }
  if (cfg.shots + 1 > pool.size()) {
    throw ConfigError("shots = " + std::to_string(cfg.shots) + " exceeds the " + std::to_string(pool.size() - 1) +
                      " images available per query");
  }

  BuildResult result;
  Xoshiro256ss seeds(cfg.seed);
  json sequences = json::array();
  for (const auto& query : queries) {
    const std::uint64_t query_seed = seeds.next();
    RetrievalResult retrieved = cfg.retrieval == RetrievalMethod::SIIR
                                    ? siir_retrieve(query, *table, cfg.shots)
                                    : rs_sample(pool, cfg.shots, query_seed, query);
    if (cfg.retrieval == RetrievalMethod::SIIR) std::reverse(retrieved.items.begin(), retrieved.items.end());

    std::vector<IceItem> ices;
    for (const auto& item : retrieved.items) {
      auto assigned = assign_caption(item.id, cfg.caption_source, dataset, cfg.mhl_anchor);
      ices.push_back({item.id, std::move(assigned.text), assigned.source, item.score});
    }
    BuiltSequence built = build_sequence(std::move(ices), query, cfg.prompt);

    json ice_json = json::array();
    for (const auto& ice : built.sequence.ices) {
      ice_json.push_back(
          {{"image_id", ice.image_id}, {"caption", ice.caption}, {"source", source_name(ice.source)}, {"score", ice.score}});
    }
    sequences.push_back({{"sample_id", query},
                         {"query_image_id", query},
                         {"shot_count", built.sequence.shot_count()},
                         {"ices", std::move(ice_json)},
                         {"prompt", built.prompt},
                         {"layout", layout_to_json(built.layout)}});
    result.sequences.push_back(std::move(built));
  }

  result.document = {{"version", 1},
                     {"retrieval", method_name(cfg.retrieval)},
                     {"caption_source", source_name(cfg.caption_source)},
                     {"shots", cfg.shots},
                     {"seed", cfg.seed},
                     {"ice_order", cfg.retrieval == RetrievalMethod::SIIR ? "most_similar_last" : "draw_order"},
                     {"template", prompt_template_to_json(cfg.prompt)},
                     {"sequences", std::move(sequences)}};
  return result;
}

BuildResult cmd_build(const PipelineConfig& cfg) {
  BuildResult result = run_build(cfg);
  write_file_atomic(cfg.demos_path(), result.document.dump(2) + "\n");
  return result;
}

// -------------------------------------------------------------------- score

std::vector<GeneratedCaption> load_generated_captions(const fs::path& path) {
  json doc = read_json_file(path);
  if (doc.is_object() && doc.contains("captions")) doc = doc.at("captions");
  if (!doc.is_array()) throw DataError(path.string() + ": expected an array of {sample_id, caption}");
  std::vector<GeneratedCaption> out;
  try {
    for (const auto& rec : doc) out.push_back({rec.at("sample_id").get<std::string>(), rec.at("caption").get<std::string>()});
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

double Report::column_mean(const std::string& metric) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.metric == metric) {
      sum += r.value;
      ++n;
    }
  }
  return n == 0 ? std::nan("") : sum / static_cast<double>(n);
}

std::optional<double> Report::value(const std::string& sample_id, const std::string& metric) const {
  for (const auto& r : rows) {
    if (r.sample_id == sample_id && r.metric == metric) return r.value;
  }
  return std::nullopt;
}

Report run_score(const PipelineConfig& cfg, const std::vector<GeneratedCaption>& captions, const json& demos) {
  Report report;
  report.config_echo = cfg.raw;
  if (captions.empty()) {
    report.warnings.push_back("captions file is empty; report has no rows");
    return report;
  }

  std::map<std::string, const json*> by_sample;
  for (const auto& seq : demos.at("sequences")) by_sample.emplace(seq.at("sample_id").get<std::string>(), &seq);
  std::vector<std::string> orphans;
  for (const auto& c : captions) {
    if (!by_sample.contains(c.sample_id)) orphans.push_back(c.sample_id);
  }
  if (!orphans.empty()) {
    std::string list;
    for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
    throw DataError("generated captions without a demonstration sequence: " + list);
  }

  std::optional<CaptionDataset> dataset;
  if (cfg.paths.captions) dataset = load_caption_dataset(*cfg.paths.captions);
  auto query_of = [&](const GeneratedCaption& c) { return by_sample.at(c.sample_id)->at("query_image_id").get<std::string>(); };

  // CIDEr: references are the query image's human captions, document
  // frequencies over the evaluated query images.
  if (cfg.metrics.cider) {
    if (!dataset) {
      report.warnings.push_back("no caption dataset configured; CIDEr disabled");
    } else {
      std::vector<std::vector<std::string>> docs;
      std::set<std::string> seen;
      for (const auto& c : captions) {
        const auto q = query_of(c);
        if (seen.insert(q).second) docs.push_back(dataset->at(q).human_captions);
      }
      const auto df = DocumentFrequency::from_documents(docs);
      for (const auto& c : captions) {
        const auto& refs = dataset->at(query_of(c)).human_captions;
        if (refs.empty()) throw DataError("image '" + query_of(c) + "' has no human captions for CIDEr");
        const auto score = cider(c.caption, refs, df);
        if (score.empty_candidate) report.warnings.push_back("sample '" + c.sample_id + "' has an empty caption");
        report.rows.push_back({c.sample_id, kColCider, score.value});
      }
    }
  }

  if (cfg.metrics.clipscore) {
    if (!cfg.paths.embeddings || !cfg.paths.text_embeddings || !cfg.paths.text_embedding_ids) {
      report.warnings.push_back("image or caption embeddings missing; CLIPScore disabled");
    } else {
      const auto images = load_embedding_table(*cfg.paths.embeddings, *cfg.paths.embedding_ids);
      const auto texts = load_embedding_table(*cfg.paths.text_embeddings, *cfg.paths.text_embedding_ids);
      for (const auto& c : captions) {
        const auto ti = texts.find(c.sample_id);
        const auto ii = images.find(query_of(c));
        if (!ti || !ii) {
          report.warnings.push_back("sample '" + c.sample_id + "' lacks embeddings; CLIPScore skipped");
          continue;
        }
        report.rows.push_back({c.sample_id, kColClipScore, clipscore(images.row(*ii), texts.row(*ti))});
      }
    }
  }

  if (cfg.metrics.chair) {
    if (!dataset || !cfg.paths.lexicon) {
      report.warnings.push_back("caption dataset or CHAIR lexicon missing; CHAIR disabled");
    } else {
      const auto lexicon = load_chair_lexicon(*cfg.paths.lexicon);
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& c : captions) pairs.emplace_back(query_of(c), c.caption);
      const auto result = chair(pairs, *dataset, lexicon);
      for (std::size_t i = 0; i < captions.size(); ++i) {
        const auto& d = result.details[i];
        const auto& id = captions[i].sample_id;
        report.rows.push_back({id, kColChairMentions, static_cast<double>(d.mentions.size())});
        report.rows.push_back({id, kColChairHallucinated, static_cast<double>(d.hallucinated)});
        report.rows.push_back(
            {id, kColChairI,
             d.mentions.empty() ? 0.0 : static_cast<double>(d.hallucinated) / static_cast<double>(d.mentions.size())});
        report.rows.push_back({id, kColChairS, d.hallucinated > 0 ? 1.0 : 0.0});
      }
      report.aggregates[kColChairI] = result.chair_i;
      report.aggregates[kColChairS] = result.chair_s;
    }
  }

  if (cfg.metrics.shortcut) {
    for (const auto& c : captions) {
      std::vector<std::string> ice_captions;
      for (const auto& ice : by_sample.at(c.sample_id)->at("ices")) ice_captions.push_back(ice.at("caption").get<std::string>());
      report.rows.push_back({c.sample_id, kColShortcut, shortcut_cider(c.caption, ice_captions).value});
    }
  }

  if (cfg.metrics.attention && cfg.paths.run) {
    const RunBundle bundle = load_run(*cfg.paths.run);
    for (const auto& c : captions) {
      const RunSample* s = bundle.find(c.sample_id);
      if (s == nullptr || !s->with_image || !s->without_image) {
        report.warnings.push_back("sample '" + c.sample_id + "' lacks both attention variants; VCAR skipped");
        continue;
      }
      try {
        const auto p = layer_profile(AttentionMetric::Vcar, *s->with_image, &*s->without_image, s->segmentation);
        report.rows.push_back({c.sample_id, kColVcar, p.mean});
      } catch (const DomainError& e) {
        report.warnings.push_back("sample '" + c.sample_id + "': VCAR skipped: " + e.what());
      }
    }
    const auto attn = run_attn(bundle, {AttentionMetric::Acar, AttentionMetric::Iear, AttentionMetric::Vcar});
    report.profiles = attn.layers;
    report.warnings.insert(report.warnings.end(), attn.warnings.begin(), attn.warnings.end());
  }

  for (const char* col : {kColCider, kColClipScore, kColShortcut, kColVcar}) {
    const double m = report.column_mean(col);
    if (!std::isnan(m)) report.aggregates[col] = m;
  }
  return report;
}

std::string report_csv(const Report& report) {
  std::string out = "sample_id,metric,value\n";
  for (const auto& r : report.rows) out += r.sample_id + "," + r.metric + "," + format_double(r.value) + "\n";
  return out;
}

std::string profile_csv(const std::vector<ProfileRow>& rows) {
  std::string out = "layer,metric,value,sentinel_flag\n";
  for (const auto& r : rows) {
    out += std::to_string(r.layer) + "," + r.metric + "," + format_double(r.value) + "," + (r.sentinel ? "1" : "0") + "\n";
  }
  return out;
}

Report cmd_score(const PipelineConfig& cfg, const fs::path& captions_path) {
  cfg.validate();
  const auto captions = load_generated_captions(captions_path);
  json demos = {{"sequences", json::array()}};
  if (!captions.empty()) {
    if (!fs::exists(cfg.demos_path())) throw ConfigError("demonstration set not found: " + cfg.demos_path().string());
    demos = read_json_file(cfg.demos_path());
  }
  Report report = run_score(cfg, captions, demos);

  write_file_atomic(cfg.paths.out / "report.csv", report_csv(report));
  if (!report.profiles.empty()) write_file_atomic(cfg.paths.out / "profiles.csv", profile_csv(report.profiles));
  json aggregates = json::object();
  for (const auto& [k, v] : report.aggregates) aggregates[k] = v;
  const json summary = {{"aggregates", aggregates},
                        {"rows", report.rows.size()},
                        {"warnings", report.warnings},
                        {"config_echo", "config.echo"}};
  write_file_atomic(cfg.paths.out / "summary.json", summary.dump(2) + "\n");
  write_file_atomic(cfg.paths.out / "config.echo", report.config_echo);
  return report;
}

// --------------------------------------------------------------------- attn

AttnReport run_attn(const RunBundle& bundle, const std::vector<AttentionMetric>& metrics, std::size_t jobs) {
  struct Slot {
    std::vector<AttnSampleProfile> profiles;
    std::vector<std::string> warnings;
  };
  std::vector<Slot> slots(bundle.samples.size());

  auto work = [&](std::size_t s) {
    const auto& sample = bundle.samples[s];
    auto& slot = slots[s];
    if (!sample.with_image) {
      slot.warnings.push_back("sample '" + sample.id + "' has no with_query_image attention; skipped");
      return;
    }
    for (const auto metric : metrics) {
      if (metric == AttentionMetric::Vcar && !sample.without_image) {
        slot.warnings.push_back("sample '" + sample.id + "' has no without_query_image variant; VCAR skipped");
        continue;
      }
      try {
        const auto* without = sample.without_image ? &*sample.without_image : nullptr;
        slot.profiles.push_back({sample.id, layer_profile(metric, *sample.with_image, without, sample.segmentation)});
      } catch (const DomainError& e) {
        slot.warnings.push_back("sample '" + sample.id + "': " + std::string(metric_name(metric)) + " skipped: " + e.what());
      }
    }
  };

  jobs = std::max<std::size_t>(1, std::min(jobs, bundle.samples.size()));
  if (jobs == 1) {
    for (std::size_t s = 0; s < slots.size(); ++s) work(s);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t s = w; s < slots.size(); s += jobs) work(s);
      });
    }
  }

  AttnReport report;
  for (auto& slot : slots) {
    for (auto& p : slot.profiles) report.samples.push_back(std::move(p));
    for (auto& w : slot.warnings) report.warnings.push_back(std::move(w));
  }

  for (const auto metric : metrics) {
    std::vector<double> sum;
    std::vector<std::size_t> finite, sentinels;
    for (const auto& sp : report.samples) {
      if (sp.profile.metric != metric) continue;
      const auto& values = sp.profile.values;
      if (values.size() > sum.size()) {
        sum.resize(values.size(), 0.0);
        finite.resize(values.size(), 0);
        sentinels.resize(values.size(), 0);
      }
      for (std::size_t l = 0; l < values.size(); ++l) {
        if (values[l].sentinel) {
          ++sentinels[l];
        } else {
          sum[l] += values[l].value;
          ++finite[l];
        }
      }
    }
    if (sum.empty()) continue;
    double mean_sum = 0.0;
    std::size_t mean_n = 0;
    for (std::size_t l = 0; l < sum.size(); ++l) {
      const double v = finite[l] > 0 ? sum[l] / static_cast<double>(finite[l]) : std::numeric_limits<double>::infinity();
      report.layers.push_back({l, std::string(metric_name(metric)), v, sentinels[l] > 0});
      if (finite[l] > 0) {
        mean_sum += v;
        ++mean_n;
      }
    }
    if (mean_n > 0) report.means[std::string(metric_name(metric))] = mean_sum / static_cast<double>(mean_n);
  }
  return report;
}

AttnReport cmd_attn(const fs::path& run_path, const std::vector<AttentionMetric>& metrics, const fs::path& out_dir,
                    std::size_t jobs) {
  const RunBundle bundle = load_run(run_path);
  AttnReport report = run_attn(bundle, metrics, jobs);

  write_file_atomic(out_dir / "attn_profile.csv", profile_csv(report.layers));
  std::string samples = "sample_id,layer,metric,value,sentinel_flag\n";
  for (const auto& sp : report.samples) {
    for (std::size_t l = 0; l < sp.profile.values.size(); ++l) {
      const auto& v = sp.profile.values[l];
      samples += sp.sample_id + "," + std::to_string(l) + "," + std::string(metric_name(sp.profile.metric)) + "," +
                 format_double(v.value) + "," + (v.sentinel ? "1" : "0") + "\n";
    }
  }
  write_file_atomic(out_dir / "attn_samples.csv", samples);
  json means = json::object();
  for (const auto& [k, v] : report.means) means[k] = v;
  const json summary = {{"means", means},
                        {"head_aggregation", "mean"},
                        {"samples", bundle.samples.size()},
                        {"warnings", report.warnings}};
  write_file_atomic(out_dir / "attn_summary.json", summary.dump(2) + "\n");
  return report;
}

// --------------------------------------------------------------------- plan

PlanKind plan_kind_from_name(std::string_view name) {
  if (name == "anchor" || name == "anchor_centric") return PlanKind::Anchor;
  if (name == "context" || name == "context_centric") return PlanKind::Context;
  if (name == "prune") return PlanKind::Prune;
  throw ConfigError("unknown plan kind '" + std::string(name) + "'");
}

namespace {

std::string bytes_human(std::uint64_t bytes) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << static_cast<double>(bytes) / 1e6 << "M";
  return ss.str();
}

}  // namespace

PlanResult run_plan(const PlanRequest& req) {
  req.model.validate();
  const auto n_layers = static_cast<std::size_t>(req.model.n_layers);
  std::optional<TokenSegmentation> seg;
  if (req.segmentation) seg = load_segmentation(*req.segmentation);

  PlanResult result;
  std::ostringstream table;
  if (req.kind == PlanKind::Anchor || req.kind == PlanKind::Context) {
    if (!seg) throw ConfigError("mask plans need a segmentation (--seg)");
    result.mask = req.kind == PlanKind::Anchor ? anchor_mask(*seg, req.layers, n_layers)
                                               : context_mask(*seg, req.layers, n_layers);
    result.kv = kv_estimate(req.model, nullptr, seg->size());
    table << "kind " << mask_kind_name(result.mask->kind()) << "\n" << "predicate " << result.mask->predicate() << "\n";
    table << "layer,allowed_pairs\n";
    for (std::size_t l = 0; l < n_layers; ++l) table << l << "," << result.mask->allowed_pairs(l) << "\n";
    table << "kv_bytes " << result.kv.bytes << " (" << bytes_human(result.kv.bytes) << ")\n";
    result.table = table.str();
    return result;
  }

  const std::size_t prediction = req.prediction_layer.value_or(n_layers - 1);
  if (seg && !req.full_length && !req.kept_length) {
    result.prune = prune_plan(*seg, req.prune_layer, req.recover, prediction, n_layers);
  } else {
    std::size_t full = 0, kept = 0;
    if (seg) {
      const auto from_seg = prune_plan(*seg, n_layers, req.recover, prediction, n_layers);
      full = from_seg.full_length;
      kept = from_seg.kept_length;
    }
    if (req.full_length) full = *req.full_length;
    if (req.kept_length) kept = *req.kept_length;
    if (full == 0) throw ConfigError("prune plan needs --seg or --full-len");
    result.prune = prune_plan_from_counts(full, kept, req.prune_layer, req.recover, prediction, n_layers);
  }
  const auto& plan = *result.prune;
  result.kv = kv_estimate(req.model, &plan, plan.full_length);
  const auto baseline = kv_estimate(req.model, nullptr, plan.full_length);

  table << "layer,effective_length\n";
  for (std::size_t l = 0; l < plan.layer_lengths.size(); ++l) table << l << "," << plan.layer_lengths[l] << "\n";
  table << "row,kv_bytes,kv_human,savings\n";
  table << "baseline," << baseline.bytes << "," << bytes_human(baseline.bytes) << ",0\n";
  table << "plan," << result.kv.bytes << "," << bytes_human(result.kv.bytes) << "," << std::fixed << std::setprecision(4)
        << result.kv.savings << "\n";
  result.table = table.str();
  return result;
}

PlanResult cmd_plan(const PlanRequest& req, const fs::path& out_dir) {
  PlanResult result = run_plan(req);
  if (result.mask) {
    save_mask_plan(*result.mask, out_dir, "plan");
  } else {
    json doc = prune_plan_to_json(*result.prune);
    doc["kv_bytes"] = result.kv.bytes;
    doc["kv_baseline_bytes"] = result.kv.baseline_bytes;
    doc["kv_savings"] = result.kv.savings;
    doc["kv_scope"] = "prompt tokens, decoder self-attention layers only";
    write_file_atomic(out_dir / "plan.prune.json", doc.dump(2) + "\n");
  }
  write_file_atomic(out_dir / "plan.txt", result.table);
  return result;
}

// -------------------------------------------------------------------- synth

fs::path cmd_synth(const fs::path& spec_path, const fs::path& out_dir, std::optional<std::uint64_t> seed_override) {
  const json doc = read_json_file(spec_path);
  TokenSegmentation seg;
  try {
    const json& s = doc.at("segmentation");
    seg = s.is_string() ? load_segmentation(spec_path.parent_path() / s.get<std::string>()) : segmentation_from_json(s);
  } catch (const json::exception& e) {
    throw ConfigError(spec_path.string() + ": " + e.what());
  }
  SynthSpec spec = synth_spec_from_json(doc, seg);
  if (seed_override) spec.seed = *seed_override;

  const std::size_t samples = doc.value("samples", std::size_t{1});
  const std::string prefix = doc.value("sample_prefix", std::string("synth"));
  const std::optional<json> without =
      doc.contains("without_query_image") ? std::optional<json>(doc.at("without_query_image")) : std::nullopt;

  Xoshiro256ss seeds(spec.seed);
  json manifest_samples = json::array();
  save_segmentation(seg, out_dir / "segmentation.json");
  for (std::size_t s = 0; s < samples; ++s) {
    const std::string id = samples == 1 ? prefix : prefix + "_" + std::to_string(s);
    SynthSpec sample_spec = spec;
    if (samples > 1) sample_spec.seed = seeds.next();
    const auto with_rec = gen_attention(sample_spec, Variant::WithQueryImage, id);
    save_tensor(with_rec.tensor.cast<float>(), out_dir / (id + ".with.iclt"));
    json attention = {{"with_query_image", id + ".with.iclt"}};
    if (without) {
      json merged = doc;
      for (auto it = without->begin(); it != without->end(); ++it) merged[it.key()] = it.value();
      SynthSpec w = synth_spec_from_json(merged, seg);
      if (samples > 1 || seed_override) w.seed = sample_spec.seed ^ 0x5bd1e995ULL;
      const auto without_rec = gen_attention(w, Variant::WithoutQueryImage, id);
      save_tensor(without_rec.tensor.cast<float>(), out_dir / (id + ".without.iclt"));
      attention["without_query_image"] = id + ".without.iclt";
    }
    manifest_samples.push_back({{"id", id}, {"segmentation", "segmentation.json"}, {"attention", attention}});
  }

  const json model = doc.value("model", json::object());
  const json manifest = {{"version", kManifestVersion},
                         {"model",
                          {{"name", model.value("name", std::string("synthetic"))},
                           {"n_layers", spec.n_layers},
                           {"n_heads", spec.n_heads},
                           {"head_dim", model.value("head_dim", 64)},
                           {"kv_bytes_per_element", model.value("kv_bytes_per_element", 2)},
                           {"attention_dtype", "f32"}}},
                         {"samples", manifest_samples},
                         {"files", json::object()}};
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return out_dir / "manifest.json";
}

// ----------------------------------------------------------------- validate

ValidationSummary cmd_validate(const fs::path& run_path) {
  const RunBundle bundle = load_run(run_path);
  ValidationSummary out;
  out.samples = bundle.samples.size();
  for (const auto& s : bundle.samples) {
    if (s.with_image) ++out.with_image;
    if (s.without_image) ++out.without_image;
    if (!s.with_image && !s.without_image) out.warnings.push_back("sample '" + s.id + "' has no attention records");
    if (!s.caption) out.warnings.push_back("sample '" + s.id + "' has no generated caption");
  }
  std::ostringstream ss;
  ss << "run " << bundle.root.string() << ": OK\n"
     << "model " << bundle.model.name << " layers=" << bundle.model.cfg.n_layers << " heads=" << bundle.model.cfg.n_heads
     << "\n"
     << "samples " << out.samples << " (with_query_image " << out.with_image << ", without_query_image "
     << out.without_image << ")\n";
  for (const auto& [name, table] : bundle.embeddings) {
    ss << "embeddings " << name << ": " << table.size() << " x " << table.dim() << "\n";
  }
  out.text = ss.str();
  return out;
}

}  // namespace iclkit
