// Command-line surface for the contamination-detection pipeline: one config
// file, stage toggles for ablations, and line-delimited artifacts throughout.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "tracer/baselines.hpp"
#include "tracer/bm25.hpp"
#include "tracer/metrics.hpp"
#include "tracer/pipeline.hpp"
#include "tracer/tuning.hpp"

namespace {

using namespace tracer;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// ---- ingest ----------------------------------------------------------------

int cmd_ingest(const RunConfig& cfg, const std::string& out_dir) {
    auto benches = ingest_all(cfg.benchmarks, DatasetRole::benchmark);
    auto trains = ingest_all(cfg.post_training, DatasetRole::post_training);
    for (const auto* group : {&benches, &trains}) {
        for (const auto& ds : *group) {
            std::cout << ds.dataset_id << " (" << to_string(ds.role) << "): " << ds.size()
                      << " tasks\n";
            if (!out_dir.empty()) {
                std::filesystem::create_directories(out_dir);
                jsonl_writer out(std::filesystem::path(out_dir) / (ds.dataset_id + ".jsonl"),
                                 /*append=*/false);
                for (const auto& t : ds.tasks) {
                    json rec{{"id", t.id}, {"description", t.description}};
                    if (t.solution) rec["solution"] = *t.solution;
                    out.write(rec);
                }
            }
        }
    }
    return kExitOk;
}

// ---- normalize -------------------------------------------------------------

void run_normalize(const RunConfig& cfg, Gateway& gateway, std::vector<Dataset> groups[2]) {
    std::filesystem::create_directories(cfg.run_dir);
    for (auto* group : {&groups[0], &groups[1]}) {
        for (auto& ds : *group) {
            auto store = cfg.run_dir / ("normalized_" + ds.dataset_id + ".jsonl");
            auto existing = load_normalization_records(store);
            jsonl_writer sink(store, /*append=*/true);
            auto outcome = normalize_dataset(gateway, ds, cfg.chat.model_id, &existing, &sink,
                                             cfg.concurrency, cfg.chat.max_output);
            if (!outcome.failures.empty()) {
                throw backend_error("normalization failed for " +
                                    std::to_string(outcome.failures.size()) + " task(s) in '" +
                                    ds.dataset_id + "'; first: " + outcome.failures.front());
            }
            ds = std::move(outcome.dataset);
            std::cout << "normalized " << ds.dataset_id << ": " << ds.size() << " tasks\n";
        }
    }
}

int cmd_normalize(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.run_dir);
    std::vector<Dataset> groups[2] = {ingest_all(cfg.benchmarks, DatasetRole::benchmark),
                                      ingest_all(cfg.post_training, DatasetRole::post_training)};
    auto bundle = build_gateway(cfg, groups[0], groups[1]);
    run_normalize(cfg, *bundle.gateway, groups);
    bundle.gateway->ledger().save(cfg.run_dir / "ledger.json");
    return kExitOk;
}

// ---- triage ----------------------------------------------------------------

int cmd_triage(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.run_dir);
    std::vector<Dataset> groups[2] = {ingest_all(cfg.benchmarks, DatasetRole::benchmark),
                                      ingest_all(cfg.post_training, DatasetRole::post_training)};
    auto bundle = build_gateway(cfg, groups[0], groups[1]);
    if (cfg.stages.normalize) run_normalize(cfg, *bundle.gateway, groups);

    std::map<std::string, EmbeddingMatrix> matrices;
    for (auto* group : {&groups[0], &groups[1]}) {
        for (const auto& ds : *group) {
            std::vector<std::string> texts;
            for (const auto& t : ds.tasks) texts.push_back(t.working_text());
            EmbeddingMatrix m;
            m.dataset_id = ds.dataset_id;
            if (!texts.empty()) m.rows = bundle.gateway->embed(cfg.embedding.model_id, texts);
            matrices[ds.dataset_id] = std::move(m);
        }
    }

    PartitionAccumulator acc(cfg.thresholds.triage);
    jsonl_writer score_file(cfg.run_dir / "scores.jsonl", /*append=*/false);
    for (const auto& bench : groups[0]) {
        for (const auto& train : groups[1]) {
            score_all(bench, train, matrices.at(bench.dataset_id),
                      matrices.at(train.dataset_id),
                      [&](const PairScore& s) {
                          score_file.write_raw(score_line(s));
                          acc.add(s);
                      },
                      cfg.tile_size);
        }
    }
    auto part = acc.take();
    json manifest = {{"tau_low", cfg.thresholds.triage.tau_low},
                     {"tau_high", cfg.thresholds.triage.tau_high},
                     {"total", part.total()},
                     {"auto_fi", part.auto_fi.size()},
                     {"auto_u", part.auto_u.size()},
                     {"ambiguous", part.ambiguous.size()}};
    write_json_file(cfg.run_dir / "partition.json", manifest);
    bundle.gateway->ledger().save(cfg.run_dir / "ledger.json");
    std::cout << manifest.dump(2) << '\n';
    return kExitOk;
}

// ---- detect ----------------------------------------------------------------

int cmd_detect(const RunConfig& cfg) {
    DetectRun run(cfg);
    RunReport report = run.run();
    std::cout << "total pairs:        " << report.total_pairs << '\n'
              << "auto FI / auto U:   " << report.auto_fi << " / " << report.auto_u << '\n'
              << "ambiguous:          " << report.ambiguous << '\n'
              << "verified:           " << report.verified << '\n'
              << "trivial-filtered:   " << report.filtered << '\n'
              << "contaminated:       " << report.detected_contaminated << '\n'
              << "contamination rate: " << report.contamination_rate << '\n'
              << "tokens:             " << run.gateway().ledger().total_tokens() << '\n'
              << "cost:               " << report.cost << '\n'
              << "report:             " << (cfg.run_dir / "report.json").string() << '\n';
    return kExitOk;
}

// ---- verify / screen as standalone passes ----------------------------------

int cmd_verify(const RunConfig& cfg) {
    RunConfig partial = cfg;
    partial.stages.screen = false;
    DetectRun run(partial);
    RunReport report = run.run();
    std::cout << "verified " << report.verified << " ambiguous pair(s); verdicts in "
              << (cfg.run_dir / "verdicts.jsonl").string() << '\n';
    return kExitOk;
}

int cmd_screen(const RunConfig& cfg, const std::string& verdicts_path,
               const std::string& out_path) {
    std::vector<Dataset> groups[2] = {ingest_all(cfg.benchmarks, DatasetRole::benchmark),
                                      ingest_all(cfg.post_training, DatasetRole::post_training)};
    auto bundle = build_gateway(cfg, groups[0], groups[1]);
    if (cfg.stages.normalize) run_normalize(cfg, *bundle.gateway, groups);

    std::map<std::string, const Task*> bench_index, corpus_index;
    for (const auto& ds : groups[0]) {
        for (const auto& t : ds.tasks) bench_index.emplace(t.id, &t);
    }
    for (const auto& ds : groups[1]) {
        for (const auto& t : ds.tasks) corpus_index.emplace(t.id, &t);
    }

    auto verdicts = load_verdicts(verdicts_path);
    auto store = cfg.run_dir / "judgments.jsonl";
    std::filesystem::create_directories(cfg.run_dir);
    auto existing = load_judgments(store);
    jsonl_writer jsink(store, /*append=*/true);
    ScreenOptions options{cfg.chat.model_id, cfg.chat.max_output, cfg.parse_retries};
    TrivialScreen screen(*bundle.gateway, options, std::move(existing),
                         [&](const TrivialJudgment& j) { jsink.write(judgment_to_json(j)); });

    auto screened = apply_screening(std::move(verdicts), [&](const TaskPair& p, bool test_side) {
        const auto& index = test_side ? bench_index : corpus_index;
        auto it = index.find(test_side ? p.test_id : p.train_id);
        if (it == index.end()) {
            throw data_error("unknown task id '" + (test_side ? p.test_id : p.train_id) + "'");
        }
        return screen.is_trivial(*it->second);
    });

    jsonl_writer out(out_path, /*append=*/false);
    std::size_t filtered = 0;
    for (const auto& v : screened) {
        out.write(verdict_to_json(v));
        if (v.trivial_filtered) ++filtered;
    }
    std::cout << "screened " << screened.size() << " verdict(s); " << filtered
              << " trivial-filtered\n";
    return kExitOk;
}

// ---- tune ------------------------------------------------------------------

std::vector<ScoredGold> join_scores_with_gold(const std::filesystem::path& scores_path,
                                              const std::filesystem::path& gold_path) {
    auto gold = load_gold_labels(gold_path);
    auto scores = load_scores(scores_path);
    std::map<std::string, double> by_triple;
    std::map<std::pair<std::string, std::string>, double> by_pair;
    for (const auto& s : scores) {
        by_triple[verdict_key(s.pair)] = s.sigma;
        by_pair[{s.pair.test_id, s.pair.train_id}] = s.sigma;
    }
    std::vector<ScoredGold> dev;
    for (const auto& g : gold) {
        double sigma = 0.0;
        if (auto it = by_triple.find(verdict_key(g.pair)); it != by_triple.end()) {
            sigma = it->second;
        } else if (auto it2 = by_pair.find({g.pair.test_id, g.pair.train_id});
                   it2 != by_pair.end()) {
            sigma = it2->second;
        } else {
            throw data_error("no score for gold pair (" + g.pair.test_id + ", " +
                             g.pair.train_id + ")");
        }
        dev.push_back({sigma, g.label});
    }
    return dev;
}

void write_grid_table(const std::filesystem::path& path, const std::vector<GridRow>& rows,
                      const std::vector<std::string>& headers) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write " + path.string());
    for (std::size_t i = 0; i < headers.size(); ++i) out << headers[i] << '\t';
    out << "value\n";
    char buf[64];
    for (const auto& row : rows) {
        for (double t : row.thresholds) {
            std::snprintf(buf, sizeof(buf), "%.6f\t", t);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.6f\n", row.value);
        out << buf;
    }
}

int cmd_tune(const RunConfig& cfg, const std::string& mode, const std::string& scores_path,
             const std::string& gold_path, const std::string& out_path) {
    auto dev = join_scores_with_gold(scores_path, gold_path);
    std::filesystem::path out = out_path.empty()
                                    ? cfg.run_dir / ("tuned_" + mode + ".json")
                                    : std::filesystem::path(out_path);
    std::filesystem::create_directories(out.parent_path().empty() ? "." : out.parent_path());
    auto grid_path = out;
    grid_path.replace_extension(".grid.tsv");

    if (mode == "triage") {
        auto result = tune_triage({dev, 0.9, 0.9, cfg.grid_step});
        write_json_file(out, {{"tau_low", result.thresholds.tau_low},
                              {"tau_high", result.thresholds.tau_high},
                              {"recall_floor", 0.9},
                              {"precision_floor", 0.9},
                              {"step", cfg.grid_step}});
        std::vector<GridRow> rows = result.low_grid;
        rows.insert(rows.end(), result.high_grid.begin(), result.high_grid.end());
        write_grid_table(grid_path, rows, {"threshold"});
        std::cout << "tau_low=" << result.thresholds.tau_low
                  << " tau_high=" << result.thresholds.tau_high << '\n';
    } else if (mode == "binary") {
        auto result = tune_binary_threshold(dev, cfg.grid_step);
        write_json_file(out, {{"threshold", result.threshold},
                              {"f1", result.f1},
                              {"step", cfg.grid_step}});
        write_grid_table(grid_path, result.grid, {"threshold"});
        std::cout << "threshold=" << result.threshold << " f1=" << result.f1 << '\n';
    } else if (mode == "fine") {
        auto result = tune_fine_thresholds(dev, cfg.fine_grid_step);
        write_json_file(out, {{"t1", result.thresholds.t1},
                              {"t2", result.thresholds.t2},
                              {"t3", result.thresholds.t3},
                              {"macro_f1", result.macro_f1},
                              {"step", cfg.fine_grid_step}});
        write_grid_table(grid_path, result.grid, {"t1", "t2", "t3"});
        std::cout << "t1=" << result.thresholds.t1 << " t2=" << result.thresholds.t2
                  << " t3=" << result.thresholds.t3 << " macro_f1=" << result.macro_f1 << '\n';
    } else {
        throw config_error("tune mode must be triage, binary or fine");
    }

    // PR curve data for the binary reduction at the same grid.
    auto curve = pr_curve(dev, cfg.grid_step);
    std::vector<GridRow> pr_rows;
    for (const auto& p : curve) pr_rows.push_back({{p.threshold, p.precision}, p.recall});
    auto pr_path = out;
    pr_path.replace_extension(".pr.tsv");
    write_grid_table(pr_path, pr_rows, {"threshold", "precision"});
    return kExitOk;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const std::string& gold_path, const std::string& verdicts_path,
             const std::string& out_path) {
    auto gold = load_gold_labels(gold_path);
    auto verdicts = load_verdicts(verdicts_path);

    auto matrix = confusion(gold, verdicts);
    auto report = prf(matrix);
    json out = {{"overall", metrics_to_json(report)}};

    // per-combination breakdown when combinations are recorded
    std::map<std::string, std::vector<GoldLabel>> by_combo;
    for (const auto& g : gold) {
        if (!g.pair.combination_id.empty()) by_combo[g.pair.combination_id].push_back(g);
    }
    if (!by_combo.empty() && by_combo.size() > 1) {
        json combos = json::object();
        double sum_p = 0, sum_r = 0, sum_f = 0;
        for (const auto& [combo, combo_gold] : by_combo) {
            auto m = confusion(combo_gold, verdicts);
            auto r = prf(m);
            combos[combo] = metrics_to_json(r);
            sum_p += r.macro_precision;
            sum_r += r.macro_recall;
            sum_f += r.macro_f1;
        }
        out["per_combination"] = combos;
        out["combination_mean"] = {{"precision", sum_p / by_combo.size()},
                                   {"recall", sum_r / by_combo.size()},
                                   {"f1", sum_f / by_combo.size()}};
    }

    // screening share over the gold subset
    std::map<std::pair<std::string, std::string>, const Verdict*> by_pair;
    for (const auto& v : verdicts) by_pair[{v.pair.test_id, v.pair.train_id}] = &v;
    std::uint64_t filtered = 0, pre_contaminated = 0;
    for (const auto& g : gold) {
        auto it = by_pair.find({g.pair.test_id, g.pair.train_id});
        if (it == by_pair.end()) continue;
        const Verdict& v = *it->second;
        if (v.trivial_filtered) {
            ++filtered;
            ++pre_contaminated;
        } else if (binary_reduce(v.label)) {
            ++pre_contaminated;
        }
    }
    out["screening"] = {{"filtered_in_gold", filtered},
                        {"pre_screen_contaminated_in_gold", pre_contaminated},
                        {"removed_pct_of_gold_detected",
                         pre_contaminated == 0 ? 0.0 : 100.0 * filtered / pre_contaminated}};

    // inter-annotator agreement when per-annotator labels are present
    std::vector<std::string> rater_a, rater_b;
    for (const auto& g : gold) {
        if (g.annotator_labels.size() >= 2) {
            rater_a.emplace_back(to_string(g.annotator_labels[0]));
            rater_b.emplace_back(to_string(g.annotator_labels[1]));
        }
    }
    if (!rater_a.empty()) out["cohen_kappa"] = cohen_kappa(rater_a, rater_b);

    if (!out_path.empty()) write_json_file(out_path, out);
    std::cout << "macro P/R/F1:  " << report.macro_precision << " / " << report.macro_recall
              << " / " << report.macro_f1 << '\n'
              << "binary P/R/F1: " << report.binary.precision << " / " << report.binary.recall
              << " / " << report.binary.f1 << '\n';
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    return kExitOk;
}

// ---- baseline --------------------------------------------------------------

int cmd_baseline(const RunConfig& cfg, const std::string& method, const std::string& pairs_path,
                 const std::string& scores_path, const std::string& out_path) {
    jsonl_writer out(out_path, /*append=*/false);

    if (method == "bm25") {
        auto benches = ingest_all(cfg.benchmarks, DatasetRole::benchmark);
        auto trains = ingest_all(cfg.post_training, DatasetRole::post_training);
        std::map<std::string, const Task*> bench_index;
        for (const auto& ds : benches) {
            for (const auto& t : ds.tasks) bench_index.emplace(t.id, &t);
        }
        std::vector<std::pair<std::string, std::string>> docs;
        for (const auto& ds : trains) {
            for (const auto& t : ds.tasks) docs.push_back({t.id, t.description});
        }
        auto index = Bm25Index::build(docs);

        auto pairs = load_pairs(pairs_path);
        std::vector<double> raw;
        for (const auto& p : pairs) {
            auto it = bench_index.find(p.test_id);
            if (it == bench_index.end()) {
                throw data_error("unknown benchmark task '" + p.test_id + "' in pair file");
            }
            raw.push_back(index.score(it->second->description, p.train_id));
        }
        auto classified = bm25_classify(raw, cfg.thresholds.bm25_threshold);
        if (classified.degenerate_normalization) {
            std::cerr << "warning: degenerate normalization (all BM25 scores equal); "
                         "classifying every pair non-contaminated\n";
        }
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            json rec{{"test_id", pairs[i].test_id},
                     {"train_id", pairs[i].train_id},
                     {"combination", pairs[i].combination_id},
                     {"label", classified.contaminated[i] ? "FI" : "U"},
                     {"stage", "bm25"},
                     {"binary_only", true},
                     {"raw_score", raw[i]}};
            out.write(rec);
        }
        std::cout << "bm25 baseline: " << pairs.size() << " pair(s) classified\n";
    } else if (method == "binary" || method == "fine") {
        auto scores = load_scores(scores_path);
        for (const auto& s : scores) {
            json rec{{"test_id", s.pair.test_id},
                     {"train_id", s.pair.train_id},
                     {"combination", s.pair.combination_id}};
            if (method == "binary") {
                bool c = threshold_only_binary(s.sigma, cfg.thresholds.binary_threshold);
                rec["label"] = c ? "FI" : "U";
                rec["stage"] = "threshold_binary";
                rec["binary_only"] = true;
            } else {
                rec["label"] = std::string(to_string(threshold_only_fine(s.sigma,
                                                                         cfg.thresholds.fine)));
                rec["stage"] = "threshold_fine";
            }
            out.write(rec);
        }
        std::cout << method << " baseline: " << scores.size() << " pair(s) classified\n";
    } else {
        throw config_error("baseline method must be bm25, binary or fine");
    }
    return kExitOk;
}

// ---- cost ------------------------------------------------------------------

int cmd_cost(const std::string& ledger_path, const std::string& compare_path, double price) {
    auto ledger = CostLedger::load(ledger_path);
    if (price > 0) ledger.set_price_per_million(price);
    std::cout << "stage breakdown:\n";
    for (const auto& [stage, tally] : ledger.stages()) {
        std::cout << "  " << stage << ": " << tally.total_tokens() << " tokens ("
                  << tally.calls << " calls, " << tally.cached_hits << " cached)\n";
    }
    std::cout << "total tokens: " << ledger.total_tokens() << '\n';
    std::cout << "cost: " << ledger_cost(ledger) << '\n';
    if (ledger.approximated_counts()) {
        std::cout << "note: token counts include byte-length approximations\n";
    }

    if (!compare_path.empty()) {
        auto other = CostLedger::load(compare_path);
        if (price > 0) other.set_price_per_million(price);
        double with_tokens = static_cast<double>(ledger.total_tokens());
        double without_tokens = static_cast<double>(other.total_tokens());
        if (without_tokens > 0) {
            double reduction = 100.0 * (1.0 - with_tokens / without_tokens);
            std::cout << "comparison ledger tokens: " << other.total_tokens() << '\n'
                      << "token reduction: " << reduction << "%\n";
        }
    }
    return kExitOk;
}

// ---- sample (benchmark construction) ----------------------------------------

int cmd_sample(const RunConfig& cfg, const std::string& scores_path,
               const std::string& out_dir_arg) {
    auto scores = load_scores(scores_path);
    auto pool = candidate_pool(scores, cfg.thresholds.candidate_floor);
    std::map<std::string, std::vector<TaskPair>> pools;
    for (const auto& p : pool) pools[p.combination_id].push_back(p);

    auto sampled = stratified_sample(pools, cfg.sample.n_per_combination, cfg.seed);
    auto split = split_dev_test(sampled, cfg.sample.dev_per_combination, cfg.seed);

    std::filesystem::path out_dir =
        out_dir_arg.empty() ? cfg.run_dir : std::filesystem::path(out_dir_arg);
    std::filesystem::create_directories(out_dir);
    save_pairs(sampled, out_dir / "sampled_pairs.jsonl");
    save_pairs(split.dev, out_dir / "dev_pairs.jsonl");
    save_pairs(split.test, out_dir / "test_pairs.jsonl");

    json pool_sizes = json::object();
    for (const auto& [combo, v] : pools) pool_sizes[combo] = v.size();
    write_json_file(out_dir / "sample_manifest.json",
                    {{"candidate_floor", cfg.thresholds.candidate_floor},
                     {"candidate_pool", pool.size()},
                     {"pool_sizes", pool_sizes},
                     {"n_per_combination", cfg.sample.n_per_combination},
                     {"dev_per_combination", cfg.sample.dev_per_combination},
                     {"seed", cfg.seed},
                     {"sampled", sampled.size()},
                     {"dev", split.dev.size()},
                     {"test", split.test.size()}});
    std::cout << "candidate pool: " << pool.size() << "\nsampled: " << sampled.size()
              << "\ndev/test: " << split.dev.size() << "/" << split.test.size() << '\n';
    return kExitOk;
}

// ---- export-audit ----------------------------------------------------------

int cmd_export_audit(const RunConfig& cfg, std::size_t per_dataset,
                     const std::string& out_path) {
    std::vector<Dataset> groups[2] = {ingest_all(cfg.benchmarks, DatasetRole::benchmark),
                                      ingest_all(cfg.post_training, DatasetRole::post_training)};
    auto bundle = build_gateway(cfg, groups[0], groups[1]);
    run_normalize(cfg, *bundle.gateway, groups);

    jsonl_writer out(out_path, /*append=*/false);
    std::size_t exported = 0;
    for (auto* group : {&groups[0], &groups[1]}) {
        for (const auto& ds : *group) {
            std::vector<std::size_t> order(ds.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            auto engine = std::mt19937_64(mix_seed(cfg.seed, fnv1a64(ds.dataset_id), 3));
            deterministic_shuffle(order, engine);
            std::size_t take = std::min(per_dataset, order.size());
            std::vector<std::size_t> chosen(order.begin(), order.begin() + take);
            std::sort(chosen.begin(), chosen.end());
            for (std::size_t idx : chosen) {
                const Task& t = ds.tasks[idx];
                out.write(json{{"dataset_id", ds.dataset_id},
                               {"task_id", t.id},
                               {"model_id", cfg.chat.model_id},
                               {"original", t.description},
                               {"normalized", t.normalized_description.value_or("")}});
                ++exported;
            }
        }
    }
    bundle.gateway->ledger().save(cfg.run_dir / "ledger.json");
    std::cout << "exported " << exported << " original/normalized pair(s) for review\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coarse-to-fine code-contamination detection pipeline"};
    app.require_subcommand(1);

    std::string config_path, mode, scores_path, gold_path, verdicts_path, pairs_path;
    std::string out_path, out_dir, ledger_path, compare_path, method;
    double price = 0.0;
    std::size_t audit_n = 20;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "run config JSON")->required();
    };

    auto* ingest_cmd = app.add_subcommand("ingest", "validate datasets and optionally export");
    add_config(ingest_cmd);
    ingest_cmd->add_option("--out", out_dir, "write canonical task files here");

    auto* normalize_cmd = app.add_subcommand("normalize", "stage I: rewrite descriptions");
    add_config(normalize_cmd);

    auto* triage_cmd = app.add_subcommand("triage", "stage II: embed, score, partition");
    add_config(triage_cmd);

    auto* verify_cmd = app.add_subcommand("verify", "stages I-III without screening");
    add_config(verify_cmd);

    auto* screen_cmd = app.add_subcommand("screen", "stage IV over a verdict file");
    add_config(screen_cmd);
    screen_cmd->add_option("--verdicts", verdicts_path, "verdict file to screen")->required();
    screen_cmd->add_option("--out", out_path, "screened verdict file")->required();

    auto* detect_cmd = app.add_subcommand("detect", "full pipeline run");
    add_config(detect_cmd);

    auto* tune_cmd = app.add_subcommand("tune", "grid-search thresholds on a dev split");
    add_config(tune_cmd);
    tune_cmd->add_option("--mode", mode, "triage | binary | fine")->required();
    tune_cmd->add_option("--scores", scores_path, "score file")->required();
    tune_cmd->add_option("--gold", gold_path, "gold label file")->required();
    tune_cmd->add_option("--out", out_path, "thresholds output file");

    auto* eval_cmd = app.add_subcommand("eval", "metrics report from gold and verdicts");
    eval_cmd->add_option("--gold", gold_path, "gold label file")->required();
    eval_cmd->add_option("--verdicts", verdicts_path, "verdict file")->required();
    eval_cmd->add_option("--out", out_path, "metrics report JSON");

    auto* baseline_cmd = app.add_subcommand("baseline", "bm25 / threshold-only detectors");
    add_config(baseline_cmd);
    baseline_cmd->add_option("--method", method, "bm25 | binary | fine")->required();
    baseline_cmd->add_option("--pairs", pairs_path, "pair file (bm25)");
    baseline_cmd->add_option("--scores", scores_path, "score file (binary/fine)");
    baseline_cmd->add_option("--out", out_path, "prediction output file")->required();

    auto* cost_cmd = app.add_subcommand("cost", "token and cost summary from a ledger");
    cost_cmd->add_option("--ledger", ledger_path, "ledger JSON")->required();
    cost_cmd->add_option("--compare", compare_path, "second ledger for a reduction report");
    cost_cmd->add_option("--price", price, "price per million tokens");

    auto* sample_cmd = app.add_subcommand("sample", "benchmark construction: pool, sample, split");
    add_config(sample_cmd);
    sample_cmd->add_option("--scores", scores_path, "score file")->required();
    sample_cmd->add_option("--out-dir", out_dir, "output directory");

    auto* audit_cmd = app.add_subcommand("export-audit", "original/normalized pairs for review");
    add_config(audit_cmd);
    audit_cmd->add_option("--per-dataset", audit_n, "tasks sampled per dataset");
    audit_cmd->add_option("--out", out_path, "audit export file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (ingest_cmd->parsed()) return cmd_ingest(load_config(config_path), out_dir);
        if (normalize_cmd->parsed()) return cmd_normalize(load_config(config_path));
        if (triage_cmd->parsed()) return cmd_triage(load_config(config_path));
        if (verify_cmd->parsed()) return cmd_verify(load_config(config_path));
        if (screen_cmd->parsed()) {
            return cmd_screen(load_config(config_path), verdicts_path, out_path);
        }
        if (detect_cmd->parsed()) return cmd_detect(load_config(config_path));
        if (tune_cmd->parsed()) {
            return cmd_tune(load_config(config_path), mode, scores_path, gold_path, out_path);
        }
        if (eval_cmd->parsed()) return cmd_eval(gold_path, verdicts_path, out_path);
        if (baseline_cmd->parsed()) {
            return cmd_baseline(load_config(config_path), method, pairs_path, scores_path,
                                out_path);
        }
        if (cost_cmd->parsed()) return cmd_cost(ledger_path, compare_path, price);
        if (sample_cmd->parsed()) return cmd_sample(load_config(config_path), scores_path, out_dir);
        if (audit_cmd->parsed()) {
            return cmd_export_audit(load_config(config_path), audit_n, out_path);
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const backend_error& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
