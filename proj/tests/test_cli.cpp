#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "snps3/hash.hpp"
#include "snps3/loss_kernels.hpp"
#include "snps3/proxy_planner.hpp"
#include "snps3/semantic_miner.hpp"
#include "snps3/synth_harness.hpp"
#include "test_support.hpp"

using namespace snps3;
using nlohmann::json;
namespace st = snps3::testing;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "snps3");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// A small synthetic workspace: vocab, corpus, pos corpus, lexicon.
struct Workspace {
    st::TempDir dir;
    std::string vocab = (dir / "vocab.txt").string();
    std::string corpus = (dir / "corpus.jsonl").string();
    std::string pos = (dir / "pos.jsonl").string();
    std::string lexicon = (dir / "lexicon.json").string();

    Workspace() {
        const Vocab v = synth_vocab();
        st::write_lines(vocab, v.tokens());
        const auto recs = gen_corpus(9, 40, v);
        write_corpus_jsonl(corpus, to_caption_corpus(recs));
        write_pos_jsonl(pos, to_pos_corpus(recs));
        json lex = json::object();
        for (const auto& r : recs) {
            for (std::size_t i = 0; i < r.words.size(); ++i) lex[r.words[i]] = std::string(to_string(r.tags[i]));
        }
        std::ofstream(lexicon) << lex.dump();
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

json first_line(const std::string& path) {
    std::istringstream in(st::slurp(path));
    std::string line;
    std::getline(in, line);
    return json::parse(line);
}

}  // namespace

TEST_CASE("help documents formats") {
    const Outcome o = run({"--help"});
    CHECK(o.code == 0);
    CHECK(o.out.find("plan.jsonl") != std::string::npos);
    CHECK(o.out.find("little-endian float32") != std::string::npos);
    CHECK(o.out.find("count-params") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with a JSON error line") {
    for (const auto& args : std::vector<std::vector<std::string>>{{}, {"bogus"}, {"mine", "--vocab"}}) {
        const Outcome o = run(args);
        CHECK(o.code == 1);
        const json e = json::parse(o.err);
        CHECK(e["error"]["kind"] == "usage");
        CHECK(e["error"]["exit_code"] == 1);
    }
}

TEST_CASE("seed resolution") {
    ::unsetenv("SNPS3_SEED");
    CHECK(cli::resolve_seed(std::nullopt) == 0);
    CHECK(cli::resolve_seed(5) == 5);
    ::setenv("SNPS3_SEED", "77", 1);
    CHECK(cli::resolve_seed(std::nullopt) == 77);
    CHECK(cli::resolve_seed(5) == 5);
    ::setenv("SNPS3_SEED", "7x", 1);
    CHECK_THROWS_AS(cli::resolve_seed(std::nullopt), ArgumentError);
    ::unsetenv("SNPS3_SEED");
}

TEST_CASE("mine writes sigvocab with a header") {
    Workspace w;
    const std::string sig = w.path("sig.json");
    const Outcome o = run({"mine", "--pos", w.pos, "--vocab", w.vocab, "--k", "20", "--out", sig});
    REQUIRE(o.code == 0);
    const json j = json::parse(st::slurp(sig));
    CHECK(j["k_ss"] == 20);
    CHECK(j["_header"]["pos_sha256"].get<std::string>().rfind("sha256:", 0) == 0);
    CHECK(j["vocab_hash"] == synth_vocab().hash());
    const SignificantVocab back = read_sigvocab_json(sig, synth_vocab().size());
    CHECK(back.ids().size() >= 20);

    // Worker count does not change the bytes; the lexicon path gives the same ids here.
    const std::string sig4 = w.path("sig4.json");
    REQUIRE(run({"mine", "--pos", w.pos, "--vocab", w.vocab, "--k", "20", "--workers", "4", "--out", sig4}).code == 0);
    CHECK(st::slurp(sig) == st::slurp(sig4));
    const std::string sig_lex = w.path("sig_lex.json");
    REQUIRE(run({"mine", "--corpus", w.corpus, "--lexicon", w.lexicon, "--vocab", w.vocab, "--k", "20", "--out",
                 sig_lex})
                .code == 0);
    CHECK(json::parse(st::slurp(sig_lex))["ids"] == j["ids"]);
}

TEST_CASE("chosen, plan and lvwm artifacts") {
    Workspace w;
    const std::string sig = w.path("sig.json");
    REQUIRE(run({"mine", "--pos", w.pos, "--vocab", w.vocab, "--k", "40", "--out", sig}).code == 0);

    const std::string chosen = w.path("chosen.jsonl");
    REQUIRE(run({"chosen", "--corpus", w.corpus, "--vocab", w.vocab, "--sig", sig, "--out", chosen}).code == 0);
    CHECK(first_line(chosen)["_header"]["sigvocab_sha256"] == content_hash(st::slurp(sig)));

    const std::string p1 = w.path("p1.jsonl"), p2 = w.path("p2.jsonl"), p3 = w.path("p3.jsonl");
    const std::vector<std::string> base = {"plan", "--mode", "mssm", "--rate", "0.15", "--corpus", w.corpus,
                                           "--vocab", w.vocab, "--sig", sig};
    auto with = [&](std::vector<std::string> extra) {
        std::vector<std::string> a = base;
        a.insert(a.end(), extra.begin(), extra.end());
        return a;
    };
    REQUIRE(run(with({"--seed", "42", "--out", p1})).code == 0);
    REQUIRE(run(with({"--seed", "42", "--out", p2})).code == 0);
    REQUIRE(run(with({"--seed", "43", "--out", p3})).code == 0);
    CHECK(st::slurp(p1) == st::slurp(p2));
    CHECK(st::slurp(p1) != st::slurp(p3));
    CHECK(read_plan_jsonl(p1).size() == 40);

    // Environment fallback is equivalent to the flag.
    const std::string p4 = w.path("p4.jsonl");
    ::setenv("SNPS3_SEED", "42", 1);
    REQUIRE(run(with({"--out", p4})).code == 0);
    ::unsetenv("SNPS3_SEED");
    CHECK(st::slurp(p1) == st::slurp(p4));

    const std::string mlm = w.path("mlm.jsonl");
    REQUIRE(run({"plan", "--mode", "mlm", "--corpus", w.corpus, "--vocab", w.vocab, "--out", mlm}).code == 0);
    CHECK(first_line(mlm)["_header"]["seed"] == 0);

    const std::string lv = w.path("lvwm.jsonl");
    REQUIRE(run({"lvwm", "--corpus", w.corpus, "--vocab", w.vocab, "--sig", sig, "--n-l", "3", "--seed", "1", "--out",
                 lv})
                .code == 0);
    std::istringstream in(st::slurp(lv));
    std::string line;
    std::getline(in, line);
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const json j = json::parse(line);
        CHECK(j["indices"].size() == 3);
        ++n;
    }
    CHECK(n == 40);
}

TEST_CASE("error exit codes") {
    Workspace w;
    const Outcome missing = run({"mine", "--pos", w.path("nope.jsonl"), "--vocab", w.vocab, "--out", w.path("s.json")});
    CHECK(missing.code == 2);
    CHECK(json::parse(missing.err)["error"]["kind"] == "missing_file");

    std::ofstream(w.path("bad.jsonl")) << "{\"id\": 1, \"words\": \n";
    CHECK(run({"mine", "--pos", w.path("bad.jsonl"), "--vocab", w.vocab, "--out", w.path("s.json")}).code == 3);

    std::ofstream(w.path("cfg.json")) << R"({"hidden": 10, "heads": 3})";
    CHECK(run({"count-params", "--config", w.path("cfg.json")}).code == 3);

    // A sigvocab mined against another vocabulary.
    const std::string other_vocab = w.path("other.txt");
    auto lines = synth_vocab().tokens();
    lines.push_back("extra");
    st::write_lines(other_vocab, lines);
    const std::string sig = w.path("sig_other.json");
    REQUIRE(run({"mine", "--pos", w.pos, "--vocab", other_vocab, "--out", sig}).code == 0);
    const Outcome mismatch =
        run({"plan", "--corpus", w.corpus, "--vocab", w.vocab, "--sig", sig, "--out", w.path("p.jsonl")});
    CHECK(mismatch.code == 4);
    CHECK(json::parse(mismatch.err)["error"]["kind"] == "consistency");

    CHECK(run({"plan", "--mode", "mssm", "--corpus", w.corpus, "--vocab", w.vocab, "--out", w.path("p.jsonl")}).code ==
          1);
}

TEST_CASE("loss subcommand") {
    Workspace w;
    const FeatureMatrix eye(2, 2, {1, 0, 0, 1});
    write_feature_file(w.path("v.f32"), eye);
    write_feature_file(w.path("t.f32"), eye);
    const Outcome o = run({"loss", "--kernel", "gvtm_free", "--vis", w.path("v.f32"), "--txt", w.path("t.f32"),
                           "--grad-dir", w.path("g")});
    REQUIRE(o.code == 0);
    const json j = json::parse(o.out);
    CHECK(j["value"].get<double>() == doctest::Approx(2.0 * std::log(1.0 + std::exp(-1.0))).epsilon(1e-9));
    CHECK(j["_header"]["inputs"]["vis"] == content_hash(st::slurp(w.path("v.f32"))));
    CHECK(read_feature_file(w.path("g/grad0.f32")).rows() == 2);

    write_feature_file(w.path("s.f32"), eye);
    CHECK(json::parse(run({"loss", "--kernel", "gvtm_scored", "--scores", w.path("s.f32")}).out)["value"].get<double>() ==
          doctest::Approx(0.626523).epsilon(1e-6));

    write_token_block_file(w.path("tok.f32"), TokenBlock(2, 1, 2, {1, 0, 0, 1}));
    const Outcome lv = run({"loss", "--kernel", "lvwm", "--vis", w.path("v.f32"), "--tokens", w.path("tok.f32"), "--out",
                            w.path("lv.json")});
    REQUIRE(lv.code == 0);
    CHECK(json::parse(st::slurp(w.path("lv.json")))["value"].get<double>() ==
          doctest::Approx(0.626523).epsilon(1e-6));

    write_feature_file(w.path("logits.f32"), FeatureMatrix(1, 2));
    std::ofstream(w.path("labels.json")) << "[1]";
    CHECK(json::parse(run({"loss", "--kernel", "masked_ce", "--logits", w.path("logits.f32"), "--labels",
                           w.path("labels.json")})
                          .out)["value"]
              .get<double>() == doctest::Approx(std::log(2.0)));

    CHECK(run({"loss", "--kernel", "gvtm_free", "--vis", w.path("v.f32")}).code == 1);
    CHECK(run({"loss", "--kernel", "nope"}).code == 1);
    CHECK(run({"loss", "--kernel", "lvwm", "--vis", w.path("v.f32"), "--tokens", w.path("v.f32")}).code == 3);
}

TEST_CASE("count-params variants") {
    const json snp = json::parse(run({"count-params", "--variant", "snp"}).out);
    const json p3e = json::parse(run({"count-params", "--variant", "p3e"}).out);
    const double reduction = 1.0 - snp["total"].get<double>() / p3e["total"].get<double>();
    CHECK(reduction >= 0.19);
    CHECK(reduction <= 0.25);
    const json both = json::parse(run({"count-params", "--compare"}).out);
    CHECK(both["reduction"].get<double>() == doctest::Approx(reduction));
    CHECK(run({"count-params", "--variant", "triple"}).code == 3);
}

TEST_CASE("demo is deterministic and writes its artifacts") {
    st::TempDir dir;
    const std::vector<std::string> args = {"demo", "--train", "48", "--test", "16", "--steps", "30", "--seed", "3",
                                           "--local", "--out-dir", (dir / "demo").string()};
    const Outcome a = run(args);
    const Outcome b = run(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const json m = json::parse(a.out);
    CHECK(m["_header"]["losses"] == "L3+L5");
    CHECK(m["r1"].get<double>() <= m["r5"].get<double>());
    for (const char* f : {"corpus.jsonl", "pos.jsonl", "visual.f32", "vocab.txt", "loss_curve.json", "metrics.json"}) {
        CHECK(std::filesystem::exists(dir / "demo" / f));
    }
    CHECK(read_feature_file(dir / "demo" / "visual.f32").rows() == 64);
}
