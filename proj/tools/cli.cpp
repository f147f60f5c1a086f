#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "snps3/encoder_skeleton.hpp"
#include "snps3/errors.hpp"
#include "snps3/hash.hpp"
#include "snps3/loss_kernels.hpp"
#include "snps3/proxy_planner.hpp"
#include "snps3/semantic_miner.hpp"
#include "snps3/synth_harness.hpp"
#include "snps3/tokenizer.hpp"

namespace snps3::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kFormats = R"(File formats:
  vocab.txt     one token per line, line number = id; must contain [PAD] [UNK] [CLS] [SEP] [MASK]
  pos.jsonl     {"id": str, "words": [str], "tags": [UPOS tag]} per line
  corpus.jsonl  {"id": str, "caption": str} per line
  lexicon.json  {"word": "UPOS tag", ...}
  sigvocab.json {"k_ss", "threshold", "vocab_hash", "ids": [ascending ids]}
  chosen.jsonl  {"id", "positions": [token positions]}
  plan.jsonl    {"id", "token_ids", "actions" (K keep, M mask, R random, S same), "labels", "seed_trace"}
  lvwm.jsonl    {"id", "indices": [positions] | null}
  *.f32         JSON header line {"rows","cols","dtype":"f32","order":"row-major","sha256"[, "n_l"]}
                followed by little-endian float32 values
Every JSONL artifact starts with a {"_header": {...}} line carrying input content hashes.)";

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string file_hash(const fs::path& path) { return content_hash(read_bytes(path)); }

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

/// Writes `text` to `path`, or to `fallback` when the path is empty.
void emit(const std::string& path, const std::string& text, std::ostream& fallback) {
    if (path.empty()) {
        fallback << text;
    } else {
        open_output(path) << text;
    }
}

json header(const std::string& command) {
    return {{"tool", "snps3"}, {"version", "0.1.0"}, {"command", command}};
}

void require_sig_matches(const SignificantVocab& sig, const Vocab& vocab, const std::string& sig_path) {
    if (sig.vocab_hash != vocab.hash()) {
        throw ConsistencyError(sig_path + " was mined against vocab " + sig.vocab_hash + ", not " + vocab.hash());
    }
}

// Shared flag bundle for subcommands that read a caption corpus.
struct CorpusArgs {
    std::string corpus;
    std::string vocab;
    std::size_t max_len = kDefaultTextLength;
};

void add_corpus_args(CLI::App* cmd, CorpusArgs& a) {
    cmd->add_option("--corpus", a.corpus, "corpus.jsonl")->required();
    cmd->add_option("--vocab", a.vocab, "vocab.txt")->required();
    cmd->add_option("--max-len", a.max_len, "caption length N_t including [CLS]/[SEP]")->capture_default_str();
}

struct SeedArg {
    std::uint64_t value = 0;
    CLI::Option* opt = nullptr;

    std::uint64_t get() const {
        return resolve_seed(opt->count() > 0 ? std::optional<std::uint64_t>(value) : std::nullopt);
    }
};

void add_seed(CLI::App* cmd, SeedArg& s) {
    s.opt = cmd->add_option("--seed", s.value, "global seed (default: $SNPS3_SEED, else 0)");
}

// mine --------------------------------------------------------------------------

struct MineArgs {
    std::string pos, corpus, lexicon, vocab, out, freq_out;
    std::size_t k = kDefaultSignificantVocabSize;
    unsigned workers = 1;
    bool dedup = false;
};

void run_mine(const MineArgs& a) {
    const Vocab vocab = load_vocab(a.vocab);
    PosCorpus corpus;
    json h = header("mine");
    h["vocab_hash"] = vocab.hash();
    if (!a.pos.empty()) {
        corpus = read_pos_jsonl(a.pos);
        h["pos_sha256"] = file_hash(a.pos);
    } else {
        if (a.corpus.empty() || a.lexicon.empty()) throw ArgumentError("mine needs --pos, or --corpus with --lexicon");
        const Lexicon lex = read_lexicon_json(a.lexicon);
        for (const auto& rec : read_corpus_jsonl(a.corpus)) {
            auto words = basic_split(rec.caption);
            auto tags = lexicon_pos_tag(words, lex);
            corpus.push_back({rec.id, std::move(words), std::move(tags)});
        }
        h["corpus_sha256"] = file_hash(a.corpus);
        h["lexicon_sha256"] = file_hash(a.lexicon);
    }
    if (a.dedup) corpus = dedup_records(std::move(corpus));
    h["records"] = corpus.size();

    const FrequencyTable freq = count_significant(corpus, vocab, a.workers);
    if (!a.freq_out.empty()) {
        json f = {{"_header", h}, {"vocab_hash", freq.vocab_hash}, {"counts", freq.counts}};
        open_output(a.freq_out) << f.dump() << '\n';
    }
    const SignificantVocab sig = threshold_topk(freq, a.k);
    json j = json::parse(sigvocab_to_json(sig));
    j["_header"] = h;
    open_output(a.out) << j.dump() << '\n';
}

// chosen / plan / lvwm --------------------------------------------------------------

struct ChosenArgs {
    CorpusArgs c;
    std::string sig, out;
};

void run_chosen(const ChosenArgs& a) {
    const Vocab vocab = load_vocab(a.c.vocab);
    const SignificantVocab sig = read_sigvocab_json(a.sig, vocab.size());
    require_sig_matches(sig, vocab, a.sig);
    const auto corpus = read_corpus_jsonl(a.c.corpus);
    json h = header("chosen");
    h["vocab_hash"] = vocab.hash();
    h["corpus_sha256"] = file_hash(a.c.corpus);
    h["sigvocab_sha256"] = file_hash(a.sig);
    h["max_len"] = a.c.max_len;
    auto out = open_output(a.out);
    out << json{{"_header", h}}.dump() << '\n';
    for (const auto& rec : corpus) {
        const ChosenList chosen = build_chosen_list(wordpiece_tokenize(rec.caption, vocab, a.c.max_len), sig);
        out << json{{"id", rec.id}, {"positions", chosen.positions}}.dump() << '\n';
    }
}

struct PlanArgs {
    CorpusArgs c;
    std::string mode = "mssm", sig, out;
    double rate = kDefaultMaskRate;
    SeedArg seed;
};

void run_plan(const PlanArgs& a) {
    if (a.mode != "mlm" && a.mode != "mssm") throw ArgumentError("--mode must be mlm or mssm");
    const Vocab vocab = load_vocab(a.c.vocab);
    std::optional<SignificantVocab> sig;
    json h = header("plan");
    if (a.mode == "mssm") {
        if (a.sig.empty()) throw ArgumentError("--mode mssm needs --sig");
        sig = read_sigvocab_json(a.sig, vocab.size());
        require_sig_matches(*sig, vocab, a.sig);
        h["sigvocab_sha256"] = file_hash(a.sig);
    }
    const auto corpus = read_corpus_jsonl(a.c.corpus);
    const std::uint64_t seed = a.seed.get();
    h["vocab_hash"] = vocab.hash();
    h["corpus_sha256"] = file_hash(a.c.corpus);
    h["mode"] = a.mode;
    h["rate"] = a.rate;
    h["seed"] = seed;
    h["max_len"] = a.c.max_len;
    auto out = open_output(a.out);
    out << json{{"_header", h}}.dump() << '\n';
    for (const auto& rec : corpus) {
        const TokenSeq seq = wordpiece_tokenize(rec.caption, vocab, a.c.max_len);
        const std::uint64_t s = record_seed(seed, rec.id);
        const MaskingPlan plan =
            sig ? plan_mssm(seq, build_chosen_list(seq, *sig), vocab, a.rate, s) : plan_mlm(seq, vocab, a.rate, s);
        out << plan_to_jsonl(rec.id, plan) << '\n';
    }
}

struct LvwmArgs {
    CorpusArgs c;
    std::string sig, out;
    std::size_t n_l = kDefaultLvwmSamples;
    SeedArg seed;
};

void run_lvwm(const LvwmArgs& a) {
    const Vocab vocab = load_vocab(a.c.vocab);
    const SignificantVocab sig = read_sigvocab_json(a.sig, vocab.size());
    require_sig_matches(sig, vocab, a.sig);
    const auto corpus = read_corpus_jsonl(a.c.corpus);
    const std::uint64_t seed = a.seed.get();
    json h = header("lvwm");
    h["vocab_hash"] = vocab.hash();
    h["corpus_sha256"] = file_hash(a.c.corpus);
    h["sigvocab_sha256"] = file_hash(a.sig);
    h["n_l"] = a.n_l;
    h["seed"] = seed;
    h["max_len"] = a.c.max_len;
    auto out = open_output(a.out);
    out << json{{"_header", h}}.dump() << '\n';
    for (const auto& rec : corpus) {
        const ChosenList chosen = build_chosen_list(wordpiece_tokenize(rec.caption, vocab, a.c.max_len), sig);
        const auto sample = sample_lvwm(chosen, a.n_l, record_seed(seed, rec.id));
        json line = {{"id", rec.id}, {"indices", nullptr}};
        if (sample) line["indices"] = sample->indices;
        out << line.dump() << '\n';
    }
}

// loss --------------------------------------------------------------------------

struct LossArgs {
    std::string kernel, vis, txt, tokens, scores, logits, labels, out, grad_dir;
    double scale = 1.0;
};

Matrix64 load64(const std::string& path, const char* flag) {
    if (path.empty()) throw ArgumentError(std::string("this kernel needs ") + flag);
    return Matrix64::cast(read_feature_file(path));
}

void run_loss(const LossArgs& a, std::ostream& stdout_) {
    json h = header("loss");
    json inputs = json::object();
    auto note = [&](const char* name, const std::string& path) {
        if (!path.empty()) inputs[name] = file_hash(path);
    };
    LossResult r;
    if (a.kernel == "masked_ce") {
        const Matrix64 logits = load64(a.logits, "--logits");
        if (a.labels.empty()) throw ArgumentError("masked_ce needs --labels");
        json lj;
        try {
            lj = json::parse(read_bytes(a.labels));
        } catch (const json::exception& e) {
            throw FormatError(a.labels + ": " + e.what());
        }
        if (!lj.is_array()) throw FormatError(a.labels + ": expected a JSON array of ids");
        std::vector<TokenId> labels;
        for (const auto& v : lj) {
            if (!v.is_number_integer()) throw FormatError(a.labels + ": labels must be integers");
            labels.push_back(v.get<TokenId>());
        }
        r = masked_ce(logits, labels);
        note("logits", a.logits);
        note("labels", a.labels);
    } else if (a.kernel == "gvtm_free") {
        r = gvtm_free(load64(a.vis, "--vis"), load64(a.txt, "--txt"), a.scale);
        note("vis", a.vis);
        note("txt", a.txt);
    } else if (a.kernel == "gvtm_scored") {
        r = gvtm_scored(load64(a.scores, "--scores"));
        note("scores", a.scores);
    } else if (a.kernel == "lvwm") {
        if (a.tokens.empty()) throw ArgumentError("lvwm needs --tokens");
        const TokenBlock tb = read_token_block_file(a.tokens);
        TokenBlock64 t64(tb.batch(), tb.n_l(), tb.dim(), std::vector<double>(tb.data().begin(), tb.data().end()));
        r = lvwm(load64(a.vis, "--vis"), t64, a.scale);
        note("vis", a.vis);
        note("tokens", a.tokens);
    } else {
        throw ArgumentError("unknown kernel '" + a.kernel + "'");
    }
    h["inputs"] = inputs;
    json j = {{"_header", h}, {"kernel", a.kernel}, {"value", r.value}};
    if (a.kernel == "gvtm_free" || a.kernel == "lvwm") j["scale"] = a.scale;
    if (!a.grad_dir.empty()) {
        fs::create_directories(a.grad_dir);
        json grads = json::array();
        for (std::size_t k = 0; k < r.grads.size(); ++k) {
            const fs::path p = fs::path(a.grad_dir) / ("grad" + std::to_string(k) + ".f32");
            const FeatureMatrix g = FeatureMatrix::cast(r.grads[k]);
            write_feature_file(p, g);
            grads.push_back({{"path", p.string()}, {"sha256", feature_hash(g)}});
        }
        j["grads"] = grads;
    }
    emit(a.out, j.dump() + "\n", stdout_);
}

// count-params ----------------------------------------------------------------------

struct CountArgs {
    std::string variant = "snp", config, out;
    std::uint64_t visual = kResNet50Params;
    bool compare = false;
};

void run_count(const CountArgs& a, std::ostream& stdout_) {
    EncoderConfig cfg = a.config.empty() ? EncoderConfig{} : read_encoder_config(a.config);
    json h = header("count-params");
    if (!a.config.empty()) h["config_sha256"] = file_hash(a.config);
    json j;
    if (a.compare) {
        EncoderConfig snp = cfg, p3e = cfg;
        snp.variant = EncoderVariant::SNP;
        p3e.variant = EncoderVariant::P3E;
        const ParamReport rs = count_params(snp, a.visual), rp = count_params(p3e, a.visual);
        j = {{"snp", json::parse(param_report_to_json(rs))},
             {"p3e", json::parse(param_report_to_json(rp))},
             {"reduction", relative_reduction(rs, rp)}};
    } else {
        cfg.variant = parse_variant(a.variant);
        j = json::parse(param_report_to_json(count_params(cfg, a.visual)));
    }
    j["_header"] = h;
    emit(a.out, j.dump(2) + "\n", stdout_);
}

// demo --------------------------------------------------------------------------

struct DemoArgs {
    std::size_t train = 256, test = 64, steps = 2000, dim = 32, batch = 0, n_l = kDefaultLvwmSamples;
    double lr = 0.01;
    bool local = false;
    std::string out_dir;
    SeedArg seed;
};

void run_demo(const DemoArgs& a, std::ostream& stdout_) {
    const std::uint64_t seed = a.seed.get();
    const Vocab vocab = synth_vocab();
    const auto recs = gen_corpus(seed, a.train + a.test, vocab);
    const std::vector<SynthRecord> train(recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(a.train));
    const std::vector<SynthRecord> test(recs.begin() + static_cast<std::ptrdiff_t>(a.train), recs.end());
    const SignificantVocab sig =
        threshold_topk(count_significant(to_pos_corpus(train), vocab), ConceptInventory::standard().size());

    ToyConfig cfg;
    cfg.dim = a.dim;
    cfg.steps = a.steps;
    cfg.lr = a.lr;
    cfg.batch_size = a.batch;
    cfg.use_local = a.local;
    cfg.seed = seed;
    const ToyResult r = train_toy(prepare_toy_data(train, vocab, sig, a.n_l, seed), cfg);
    const ToyData held = prepare_toy_data(test, vocab, sig, a.n_l, seed);
    const RetrievalMetrics m = eval_retrieval(r.encoders.encode_visual(held), r.encoders.encode_text(held));

    json h = header("demo");
    h["seed"] = seed;
    h["vocab_hash"] = vocab.hash();
    h["losses"] = a.local ? "L3+L5" : "L3";
    h["steps"] = a.steps;
    h["lr"] = a.lr;
    json j = json::parse(metrics_to_json(m));
    j["_header"] = h;
    j["initial_loss"] = r.loss_curve.front();
    j["final_loss"] = r.loss_curve.back();

    if (!a.out_dir.empty()) {
        const fs::path dir(a.out_dir);
        fs::create_directories(dir);
        write_corpus_jsonl(dir / "corpus.jsonl", to_caption_corpus(recs));
        write_pos_jsonl(dir / "pos.jsonl", to_pos_corpus(recs));
        write_feature_file(dir / "visual.f32", visual_matrix(recs));
        std::ofstream(dir / "vocab.txt", std::ios::binary) << [&] {
            std::string s;
            for (const auto& t : vocab.tokens()) s += t + "\n";
            return s;
        }();
        open_output(dir / "loss_curve.json") << json{{"_header", h}, {"loss", r.loss_curve}}.dump() << '\n';
        open_output(dir / "metrics.json") << j.dump(2) << '\n';
    }
    stdout_ << j.dump(2) << '\n';
}

int fail(std::ostream& err, const char* kind, const std::string& message, int code) {
    err << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << '\n';
    return code;
}

}  // namespace

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("SNPS3_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used, 10);
            if (used == std::string_view(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw ArgumentError(std::string("SNPS3_SEED is not an unsigned integer: ") + env);
    }
    return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"snps3: significant-semantic mining, masking plans, matching losses and encoder accounting", "snps3"};
    app.footer(kFormats);
    app.require_subcommand(1);

    MineArgs mine;
    auto* c_mine = app.add_subcommand("mine", "count significant (VERB/ADJ/NOUN) tokens and keep the top k");
    c_mine->add_option("--pos", mine.pos, "POS-tagged pos.jsonl");
    c_mine->add_option("--corpus", mine.corpus, "untagged corpus.jsonl (needs --lexicon)");
    c_mine->add_option("--lexicon", mine.lexicon, "lexicon.json word -> UPOS tag");
    c_mine->add_option("--vocab", mine.vocab, "vocab.txt")->required();
    c_mine->add_option("--k", mine.k, "K^ss, size of the significant vocabulary")->capture_default_str();
    c_mine->add_option("--workers", mine.workers, "counting threads")->capture_default_str()->check(CLI::PositiveNumber);
    c_mine->add_flag("--dedup", mine.dedup, "drop records repeating an earlier caption before counting");
    c_mine->add_option("--freq-out", mine.freq_out, "also write the frequency table");
    c_mine->add_option("--out", mine.out, "sigvocab.json")->required();

    ChosenArgs chosen;
    auto* c_chosen = app.add_subcommand("chosen", "per-caption positions of significant tokens");
    add_corpus_args(c_chosen, chosen.c);
    c_chosen->add_option("--sig", chosen.sig, "sigvocab.json")->required();
    c_chosen->add_option("--out", chosen.out, "chosen.jsonl")->required();

    PlanArgs plan;
    auto* c_plan = app.add_subcommand("plan", "masking plans (mlm: any token, mssm: significant tokens only)");
    add_corpus_args(c_plan, plan.c);
    c_plan->add_option("--mode", plan.mode, "mlm or mssm")->capture_default_str();
    c_plan->add_option("--sig", plan.sig, "sigvocab.json (mssm)");
    c_plan->add_option("--rate", plan.rate, "selection probability")->capture_default_str();
    add_seed(c_plan, plan.seed);
    c_plan->add_option("--out", plan.out, "plan.jsonl")->required();

    LvwmArgs lv;
    auto* c_lvwm = app.add_subcommand("lvwm", "sample N_L significant token positions per caption");
    add_corpus_args(c_lvwm, lv.c);
    c_lvwm->add_option("--sig", lv.sig, "sigvocab.json")->required();
    c_lvwm->add_option("--n-l", lv.n_l, "samples per caption")->capture_default_str()->check(CLI::PositiveNumber);
    add_seed(c_lvwm, lv.seed);
    c_lvwm->add_option("--out", lv.out, "lvwm.jsonl")->required();

    LossArgs loss;
    auto* c_loss = app.add_subcommand("loss", "evaluate one loss kernel on feature files");
    c_loss->add_option("--kernel", loss.kernel, "masked_ce | gvtm_free | gvtm_scored | lvwm")->required();
    c_loss->add_option("--vis", loss.vis, "visual features B x d (.f32)");
    c_loss->add_option("--txt", loss.txt, "text [CLS] features B x d (.f32)");
    c_loss->add_option("--tokens", loss.tokens, "token block B x N_L x d (.f32 with n_l)");
    c_loss->add_option("--scores", loss.scores, "matching scores B x B, [j][i] = video j vs caption i (.f32)");
    c_loss->add_option("--logits", loss.logits, "masked-position logits Q x V (.f32)");
    c_loss->add_option("--labels", loss.labels, "JSON array of Q target ids");
    c_loss->add_option("--scale", loss.scale, "similarity scale")->capture_default_str();
    c_loss->add_option("--grad-dir", loss.grad_dir, "write gradients as grad<k>.f32");
    c_loss->add_option("--out", loss.out, "result JSON (default stdout)");

    CountArgs count;
    auto* c_count = app.add_subcommand("count-params", "itemized trainable-parameter count");
    c_count->add_option("--variant", count.variant, "snp or p3e")->capture_default_str();
    c_count->add_option("--config", count.config, "encoder config JSON (default BERT-Base)");
    c_count->add_option("--visual-params", count.visual, "visual backbone constant")->capture_default_str();
    c_count->add_flag("--compare", count.compare, "report both variants and the relative reduction");
    c_count->add_option("--out", count.out, "report JSON (default stdout)");

    DemoArgs demo;
    auto* c_demo = app.add_subcommand("demo", "train linear encoders on a synthetic corpus and report retrieval");
    c_demo->add_option("--train", demo.train, "training pairs")->capture_default_str();
    c_demo->add_option("--test", demo.test, "held-out pairs")->capture_default_str();
    c_demo->add_option("--steps", demo.steps, "optimizer steps")->capture_default_str();
    c_demo->add_option("--lr", demo.lr, "Adam learning rate")->capture_default_str();
    c_demo->add_option("--dim", demo.dim, "embedding width")->capture_default_str();
    c_demo->add_option("--batch", demo.batch, "mini-batch size, 0 = full batch")->capture_default_str();
    c_demo->add_option("--n-l", demo.n_l, "local samples per caption")->capture_default_str();
    c_demo->add_flag("--local", demo.local, "add the local vision-word matching loss");
    add_seed(c_demo, demo.seed);
    c_demo->add_option("--out-dir", demo.out_dir, "write corpus, features, curve and metrics here");

    std::vector<std::string> rest(args.rbegin(), args.rend());
    if (!rest.empty()) rest.pop_back();  // program name
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        return fail(err, "usage", e.what(), kExitUsage);
    }

    try {
        if (*c_mine) run_mine(mine);
        if (*c_chosen) run_chosen(chosen);
        if (*c_plan) run_plan(plan);
        if (*c_lvwm) run_lvwm(lv);
        if (*c_loss) run_loss(loss, out);
        if (*c_count) run_count(count, out);
        if (*c_demo) run_demo(demo, out);
    } catch (const IoError& e) {
        return fail(err, "missing_file", e.what(), kExitMissingFile);
    } catch (const FormatError& e) {
        return fail(err, "format", e.what(), kExitFormat);
    } catch (const ConfigError& e) {
        return fail(err, "config", e.what(), kExitFormat);
    } catch (const ConsistencyError& e) {
        return fail(err, "consistency", e.what(), kExitConsistency);
    } catch (const ArgumentError& e) {
        return fail(err, "argument", e.what(), kExitUsage);
    } catch (const Error& e) {
        return fail(err, "runtime", e.what(), kExitUsage);
    } catch (const fs::filesystem_error& e) {
        return fail(err, "missing_file", e.what(), kExitMissingFile);
    }
    return kExitOk;
}

}  // namespace snps3::cli
