// amoe: generation, training, evaluation, ablation, sweeps, and adapter
// inspection for the AMoE-LoRA desk-scale lab. All tables are TSV on
// stdout/files; logs go to stderr (AMOE_LOG={error,info,debug}).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amoe/checkpoint.hpp"
#include "amoe/errors.hpp"
#include "amoe/evaluate.hpp"
#include "amoe/metrics.hpp"
#include "amoe/model.hpp"
#include "amoe/runconfig.hpp"
#include "amoe/synthdata.hpp"
#include "amoe/trainer.hpp"

namespace fs = std::filesystem;
using namespace amoe;

namespace {

int log_level() {
    const char* env = std::getenv("AMOE_LOG");
    if (!env) return 1;
    const std::string s = env;
    if (s == "error") return 0;
    if (s == "debug") return 2;
    return 1;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[amoe] " << msg << "\n";
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> stage;
};

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : RunConfig::from_file(o.config_path);
    for (const auto& kv : o.sets) cfg.set_kv(kv);
    if (o.seed) cfg.seed = *o.seed;
    if (o.stage) cfg.stage = *o.stage;
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw IoError("write failure on '" + path + "'");
}

void write_resolved(const RunConfig& cfg, const std::string& next_to) {
    write_text(next_to + ".config", cfg.resolved_text());
}

struct TrainedModel {
    std::unique_ptr<TinyTransformer> model;
    TrainReport report;
};

// Stage-aware training: stage 1 pretrains the base on normal samples;
// stage 2 restores the base from `init` and trains adapters on everything.
TrainedModel train_once(const RunConfig& cfg, const std::vector<SyntheticSample>& train,
                        const std::vector<SyntheticSample>& test, const std::string& init_path) {
    const TaskConfig task = cfg.task();
    TrainConfig tc = cfg.train();
    auto model = std::make_unique<TinyTransformer>(cfg.model(), cfg.seed);
    if (tc.stage == Stage::Stage2) {
        if (init_path.empty())
            throw ContractError("stage 2 requires --init pointing at a stage-1 checkpoint");
        restore_into(*model, read_checkpoint(init_path), /*base_only=*/true);
    }
    TrainReport report = run_stage(
        *model, task, tc.stage == Stage::Stage1 ? normal_only(train) : train, test, tc);
    return {std::move(model), std::move(report)};
}

std::string report_log_tsv(const TrainReport& r) {
    std::ostringstream os;
    os << "step\tloss\tdisc_acc\tdisc_loss\n";
    for (const auto& e : r.entries)
        os << e.step << '\t' << e.train_loss << '\t' << e.disc_acc << '\t' << e.disc_loss << '\n';
    return os.str();
}

int cmd_gen_data(const CommonOpts& common, const std::string& out_dir) {
    RunConfig cfg = resolve_config(common);
    fs::create_directories(out_dir);
    auto [train, test] = gen_split(cfg.task());
    write_dataset(out_dir + "/train.tsv", train);
    write_dataset(out_dir + "/test.tsv", test);
    write_resolved(cfg, out_dir + "/dataset");
    log_info("wrote " + std::to_string(train.size()) + " train / " + std::to_string(test.size()) +
             " test samples to " + out_dir);
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_dir, const std::string& init_path,
              const std::string& out_path) {
    RunConfig cfg = resolve_config(common);
    auto train = read_dataset(data_dir + "/train.tsv");
    auto test = read_dataset(data_dir + "/test.tsv");
    TrainedModel tm = train_once(cfg, train, test, init_path);
    save_checkpoint(out_path, *tm.model, cfg.resolved_text());
    write_text(out_path + ".log", report_log_tsv(tm.report));
    write_resolved(cfg, out_path);
    if (!tm.report.entries.empty()) {
        const auto& last = tm.report.entries.back();
        log_info("final step " + std::to_string(last.step) + " loss " + std::to_string(last.train_loss) +
                 " disc_acc " + std::to_string(last.disc_acc));
    }
    return 0;
}

std::pair<std::unique_ptr<TinyTransformer>, RunConfig> model_from_checkpoint(const std::string& path) {
    LoadedCheckpoint ck = read_checkpoint(path);
    RunConfig cfg = RunConfig::from_text(ck.config_echo, path + " (embedded config)");
    auto model = std::make_unique<TinyTransformer>(cfg.model(), cfg.seed);
    restore_into(*model, ck, /*base_only=*/false);
    return {std::move(model), std::move(cfg)};
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt, const std::string& data_dir,
             const std::string& out_path) {
    auto [model, cfg] = model_from_checkpoint(ckpt);
    for (const auto& kv : common.sets) cfg.set_kv(kv);
    auto test = read_dataset(data_dir + "/test.tsv");
    std::vector<Prediction> preds;
    EvalReport report = evaluate_model(*model, cfg.task(), test, -1, &preds);
    write_text(out_path, report_table_tsv(report));
    std::ostringstream ps;
    ps << "sample_index\tpredicted_answer\n";
    for (const auto& p : preds) {
        ps << p.sample_index << '\t';
        for (std::size_t i = 0; i < p.answer.size(); ++i) ps << (i ? " " : "") << p.answer[i];
        ps << '\n';
    }
    write_text(out_path + ".preds.tsv", ps.str());
    write_resolved(cfg, out_path);
    std::cout << report_table_tsv(report);
    return 0;
}

struct VariantRow {
    std::string label;
    EvalScores scores;
};

std::string variant_table(const std::vector<VariantRow>& rows, const std::string& extra_header = "") {
    std::ostringstream os;
    os << "variant" << extra_header << "\tdisc_acc\trouge1\trouge2\trougeL\tbleu4\n";
    for (const auto& r : rows)
        os << r.label << '\t' << r.scores.disc_acc << '\t' << r.scores.rouge1 << '\t'
           << r.scores.rouge2 << '\t' << r.scores.rougeL << '\t' << r.scores.bleu << '\n';
    return os.str();
}

int cmd_ablate(const CommonOpts& common, const std::string& data_dir, const std::string& init_path,
               const std::string& out_path) {
    RunConfig base_cfg = resolve_config(common);
    auto train = read_dataset(data_dir + "/train.tsv");
    auto test = read_dataset(data_dir + "/test.tsv");

    const std::vector<std::pair<std::string, std::string>> variants = {
        {"lora", "LoRA"}, {"moe", "LoRAMoE"}, {"full", "AMoE-LoRA"}};
    std::vector<VariantRow> rows;
    for (const auto& [key, label] : variants) {
        RunConfig cfg = base_cfg;
        cfg.variant = key;
        cfg.stage = 2;
        log_info("ablate: training variant " + label);
        TrainedModel tm = train_once(cfg, train, test, init_path);
        EvalReport rep = evaluate_model(*tm.model, cfg.task(), test);
        rows.push_back({label, rep.aggregate});
    }
    write_text(out_path, variant_table(rows));
    write_resolved(base_cfg, out_path);
    std::cout << variant_table(rows);
    return 0;
}

int cmd_sweep(const CommonOpts& common, const std::string& data_dir, const std::string& init_path,
              const std::string& out_path) {
    RunConfig base_cfg = resolve_config(common);
    auto train = read_dataset(data_dir + "/train.tsv");
    auto test = read_dataset(data_dir + "/test.tsv");

    // experts x rank grid with N * r held at 64
    const std::vector<std::pair<int, int>> grid = {{4, 16}, {8, 8}, {16, 4}, {32, 2}};
    std::ostringstream os;
    os << "# N*r = 64 sweep; reference optimum from the source experiments: N=16, r=4\n";
    os << "n_experts\trank\tdisc_acc\trouge1\trouge2\trougeL\tbleu4\n";
    for (const auto& [n, r] : grid) {
        RunConfig cfg = base_cfg;
        cfg.n_experts = n;
        cfg.rank = r;
        cfg.stage = 2;
        log_info("sweep: N=" + std::to_string(n) + " r=" + std::to_string(r));
        TrainedModel tm = train_once(cfg, train, test, init_path);
        EvalReport rep = evaluate_model(*tm.model, cfg.task(), test);
        os << n << '\t' << r << '\t' << rep.aggregate.disc_acc << '\t' << rep.aggregate.rouge1
           << '\t' << rep.aggregate.rouge2 << '\t' << rep.aggregate.rougeL << '\t'
           << rep.aggregate.bleu << '\n';
    }
    write_text(out_path, os.str());
    write_resolved(base_cfg, out_path);
    std::cout << os.str();
    return 0;
}

int cmd_inspect(const CommonOpts& common, const std::string& ckpt, const std::string& data_dir,
                const std::string& out_dir) {
    auto [model, cfg] = model_from_checkpoint(ckpt);
    (void)common;
    if (cfg.variant != "full")
        throw ContractError("inspect-adapters requires a full-variant checkpoint, got '" + cfg.variant + "'");
    auto test = read_dataset(data_dir + "/test.tsv");
    fs::create_directories(out_dir);

    const ModelConfig mc = cfg.model();
    const std::string site = "layer0." + injection_name(mc.injection_points.front());
    AmoeLoraAdapter* adapter = model->adapter_at(0, mc.injection_points.front());
    if (!adapter) throw ContractError("no adapter at " + site);

    std::vector<Tensor2> conditioning;
    std::vector<int> object_labels, defect_labels;
    const TaskConfig task = cfg.task();
    for (const auto& s : test) {
        auto [input, target] = render_qa(task, s);
        Tape tape;
        model->bind(tape, std::nullopt);
        std::map<std::string, Tensor2> capture;
        model->forward(tape, input, &capture);
        conditioning.push_back(capture.at(site));
        object_labels.push_back(s.domain_id * task.objects_per_domain + s.object_id);
        defect_labels.push_back(s.defect_id);
    }

    Tensor2 factors = adapter->extract_generated_params(conditioning);
    std::ostringstream fo;
    fo << "object_label\tdefect_label\tfactors\n";
    for (int i = 0; i < factors.rows(); ++i) {
        fo << object_labels[i] << '\t' << defect_labels[i] << '\t';
        for (int j = 0; j < factors.cols(); ++j) fo << (j ? " " : "") << factors.at(i, j);
        fo << '\n';
    }
    write_text(out_dir + "/factors.tsv", fo.str());

    Tensor2 proj = pca2(factors);
    std::ostringstream po;
    po << "object_label\tdefect_label\tpc1\tpc2\n";
    for (int i = 0; i < proj.rows(); ++i)
        po << object_labels[i] << '\t' << defect_labels[i] << '\t' << proj.at(i, 0) << '\t'
           << proj.at(i, 1) << '\n';
    write_text(out_dir + "/pca.tsv", po.str());

    const double by_object = separation_ratio(factors, object_labels);
    const double by_defect = separation_ratio(factors, defect_labels);
    std::ostringstream so;
    so << "grouping\tseparation_ratio\n";
    so << "object_category\t" << by_object << "\n";
    so << "defect_class\t" << by_defect << "\n";
    write_text(out_dir + "/separation.tsv", so.str());
    write_resolved(cfg, out_dir + "/inspect");
    std::cout << so.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AMoE-LoRA desk-scale lab"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string data_dir, init_path, out_path, ckpt_path;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "flat key=value config file");
        sub->add_option("--set", common.sets, "override: key=value (repeatable)");
        sub->add_option("--seed", common.seed, "seed override");
    };

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic anomaly-QA corpus");
    add_common(gen);
    gen->add_option("--out", out_path, "output directory")->required();

    auto* train = app.add_subcommand("train", "run one training stage");
    add_common(train);
    train->add_option("--stage", common.stage, "1 or 2")->check(CLI::Range(1, 2));
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--init", init_path, "stage-1 checkpoint (required for stage 2)");
    train->add_option("--out", out_path, "output checkpoint path")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev);
    ev->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--out", out_path, "report path")->required();

    auto* ab = app.add_subcommand("ablate", "train & compare LoRA / LoRAMoE / AMoE-LoRA");
    add_common(ab);
    ab->add_option("--data", data_dir, "dataset directory")->required();
    ab->add_option("--init", init_path, "stage-1 checkpoint")->required();
    ab->add_option("--out", out_path, "table path")->required();

    auto* sw = app.add_subcommand("sweep", "experts x rank sweep with N*r = 64");
    add_common(sw);
    sw->add_option("--data", data_dir, "dataset directory")->required();
    sw->add_option("--init", init_path, "stage-1 checkpoint")->required();
    sw->add_option("--out", out_path, "table path")->required();

    auto* in = app.add_subcommand("inspect-adapters", "dump hypernetwork-generated factors");
    add_common(in);
    in->add_option("--ckpt", ckpt_path, "full-variant checkpoint")->required();
    in->add_option("--data", data_dir, "dataset directory")->required();
    in->add_option("--out", out_path, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(common, out_path);
        if (train->parsed()) return cmd_train(common, data_dir, init_path, out_path);
        if (ev->parsed()) return cmd_eval(common, ckpt_path, data_dir, out_path);
        if (ab->parsed()) return cmd_ablate(common, data_dir, init_path, out_path);
        if (sw->parsed()) return cmd_sweep(common, data_dir, init_path, out_path);
        if (in->parsed()) return cmd_inspect(common, ckpt_path, data_dir, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
