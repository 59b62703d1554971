#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include <milqt/dataset.hpp>
#include <milqt/error.hpp>
#include <milqt/util.hpp>

#include "checks.hpp"

using namespace milqt;

namespace {

// Hand-authored four-record split: two types, three answers, mixed inline
// and external features.
void write_fixture(const std::filesystem::path& dir) {
  write_file(dir / "vocab.txt",
             "<pad>\n<unk>\nwhat\ncolor\nis\nthe\nsky\nhow\nmany\ncats\n");
  write_file(dir / "answers.txt", "blue\ntwo\ngreen\n");
  std::string records;
  records += "q0\twhat color is the sky\tcolor\tblue=1\tinline\t2 2 0.1 0.2 0.3 0.4\n";
  records += "q1\twhat color is the sky\tcolor\tgreen=0.5;blue=0.5\tinline\t2 2 1 0 0 1\n";
  records += "q2\thow many cats\tcount\ttwo=1\tfeat.txt#0\n";
  records += "q3\thow many cats here\tcount\ttwo=0.9\tinline\t2 2 0 0 0 0\n";
  write_file(dir / "records.tsv", records);
  write_file(dir / "feat.txt", "shape: 2 2\n5 6\n7 8\n");
}

}  // namespace

TEST_CASE("vocabulary specials and lookup") {
  Vocabulary v = Vocabulary::with_specials();
  CHECK(v.size() == 2);
  CHECK(v.lookup(Vocabulary::kPadToken) == Vocabulary::kPad);
  CHECK(v.lookup(Vocabulary::kUnkToken) == Vocabulary::kUnk);
  CHECK(v.lookup("absent") == Vocabulary::kUnk);
  int id = v.add("sky");
  CHECK(v.add("sky") == id);  // idempotent
  CHECK(v.lookup("sky") == id);

  Vocabulary w = Vocabulary::with_specials();
  CHECK(v.digest() != w.digest());
}

TEST_CASE("answer vocab lookup miss is -1") {
  AnswerVocab a;
  a.add("yes");
  a.add("no");
  CHECK(a.lookup("yes") == 0);
  CHECK(a.lookup("maybe") == -1);
}

TEST_CASE("tokenize lowercases and strips punctuation") {
  CHECK(tokenize("What's in THE  picture?") ==
        std::vector<std::string>{"what", "s", "in", "the", "picture"});
  CHECK(tokenize("...") == std::vector<std::string>{});
  CHECK(tokenize("a2b") == std::vector<std::string>{"a2b"});
}

TEST_CASE("tokenize_and_pad trims and pads") {
  Vocabulary v = Vocabulary::with_specials();
  for (const char* w : {"w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9",
                        "w10", "w11", "w12", "w13"}) {
    v.add(w);
  }
  std::string fourteen = "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12 w13";
  std::vector<int> t = tokenize_and_pad(fourteen, v, 12);
  REQUIRE(t.size() == 12);
  CHECK(t.front() == v.lookup("w0"));
  CHECK(t.back() == v.lookup("w11"));  // truncation keeps the first 12

  std::vector<int> s = tokenize_and_pad("w0 w1 w2", v, 12);
  REQUIRE(s.size() == 12);
  CHECK(s[2] == v.lookup("w2"));
  for (std::size_t i = 3; i < 12; ++i) CHECK(s[i] == Vocabulary::kPad);

  std::vector<int> e = tokenize_and_pad("", v, 12);
  for (int tok : e) CHECK(tok == Vocabulary::kPad);

  CHECK(tokenize_and_pad("brand new", v, 12)[0] == Vocabulary::kUnk);
}

TEST_CASE("soft targets") {
  SampleRecord r;
  r.id = "s";
  r.answer_scores = {{2, 1.0}};
  CHECK(build_soft_target(r, 3).values() == std::vector<double>{0, 0, 1});

  r.answer_scores = {{0, 0.3}, {1, 0.9}};
  CHECK(build_soft_target(r, 3).values() == std::vector<double>{0.3, 0.9, 0});

  r.answer_scores = {};
  CHECK_THROWS_AS(build_soft_target(r, 3), ValidationError);

  r.answer_scores = {{1, 0.5}, {1, 0.5}};
  CHECK_THROWS_AS(build_soft_target(r, 3), ValidationError);  // duplicate index

  r.answer_scores = {{7, 1.0}};
  CHECK_THROWS_AS(build_soft_target(r, 3), ValidationError);
}

TEST_CASE("load_dataset understands the fixture split") {
  testing::TempDir dir("data");
  write_fixture(dir.path());
  DatasetBundle b = load_dataset(dir.path());

  CHECK(b.samples.size() == 4);
  CHECK(b.num_types() == 2);
  CHECK(b.num_answers() == 3);
  CHECK(b.qtype_names == std::vector<std::string>{"color", "count"});  // sorted
  CHECK(b.type_histogram() == std::vector<std::size_t>{2, 2});

  const SampleRecord& q0 = b.samples[0];
  CHECK(q0.id == "q0");
  CHECK(q0.qtype == 0);
  CHECK(q0.answer_scores == std::vector<std::pair<int, double>>{{0, 1.0}});
  REQUIRE(q0.feature.is_inline());
  CHECK(q0.feature.inline_features.shape() == Shape{2, 2});
  CHECK(q0.feature.inline_features.values() == std::vector<double>{0.1, 0.2, 0.3, 0.4});
  REQUIRE(q0.tokens.size() == 12);
  CHECK(q0.tokens[0] == b.vocab.lookup("what"));

  const SampleRecord& q2 = b.samples[2];
  CHECK_FALSE(q2.feature.is_inline());
  CHECK(q2.feature.path == "feat.txt");
  CHECK(q2.feature.row == 0);

  FeatureStore store(b.base_dir);
  const Tensor& f = store.block(q2.feature.path, q2.feature.row);
  CHECK(f.values() == std::vector<double>{5, 6, 7, 8});
}

TEST_CASE("load_dataset accepts the records file path directly") {
  testing::TempDir dir("data_file");
  write_fixture(dir.path());
  DatasetBundle b = load_dataset(dir.path() / "records.tsv");
  CHECK(b.samples.size() == 4);
}

TEST_CASE("load_dataset rejects malformed input") {
  testing::TempDir dir("data_bad");

  SUBCASE("missing sidecar") {
    write_file(dir.path() / "records.tsv", "x\ty\tz\ta=1\tinline\t1 1 0\n");
    CHECK_THROWS_AS(load_dataset(dir.path()), IoError);
  }

  SUBCASE("vocab without specials") {
    write_fixture(dir.path());
    write_file(dir.path() / "vocab.txt", "what\ncolor\n");
    CHECK_THROWS_AS(load_dataset(dir.path()), ParseError);
  }

  SUBCASE("too few fields") {
    write_fixture(dir.path());
    write_file(dir.path() / "records.tsv", "q0\twhat\tcolor\tblue=1\n");
    CHECK_THROWS_AS(load_dataset(dir.path()), ParseError);
  }

  SUBCASE("unknown answer is named") {
    write_fixture(dir.path());
    write_file(dir.path() / "records.tsv",
               "q0\twhat\tcolor\tpurple=1\tinline\t1 1 0\n");
    try {
      load_dataset(dir.path());
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("purple") != std::string::npos);
    }
  }

  SUBCASE("score outside range") {
    write_fixture(dir.path());
    write_file(dir.path() / "records.tsv",
               "q0\twhat\tcolor\tblue=1.5\tinline\t1 1 0\n");
    CHECK_THROWS_AS(load_dataset(dir.path()), ValidationError);
  }

  SUBCASE("bad feature reference") {
    write_fixture(dir.path());
    write_file(dir.path() / "records.tsv", "q0\twhat\tcolor\tblue=1\tfeat.txt\n");
    CHECK_THROWS_AS(load_dataset(dir.path()), ParseError);
  }

  SUBCASE("inline with wrong value count") {
    write_fixture(dir.path());
    write_file(dir.path() / "records.tsv",
               "q0\twhat\tcolor\tblue=1\tinline\t2 2 1 2 3\n");
    CHECK_THROWS_AS(load_dataset(dir.path()), ParseError);
  }

  SUBCASE("empty records") {
    write_fixture(dir.path());
    write_file(dir.path() / "records.tsv", "\n");
    CHECK_THROWS_AS(load_dataset(dir.path()), ValidationError);
  }
}

TEST_CASE("parse errors carry line numbers") {
  testing::TempDir dir("data_line");
  write_fixture(dir.path());
  write_file(dir.path() / "records.tsv",
             "q0\twhat color\tcolor\tblue=1\tinline\t1 1 0\n"
             "q1\thow many\tcount\ttwo\tinline\t1 1 0\n");
  try {
    load_dataset(dir.path());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("write then load round-trips byte for byte") {
  testing::TempDir dir("data_rt");
  write_fixture(dir.path());
  DatasetBundle b = load_dataset(dir.path());

  testing::TempDir out1("data_rt1");
  write_dataset(b, out1.path());
  DatasetBundle b2 = load_dataset(out1.path());
  testing::TempDir out2("data_rt2");
  write_dataset(b2, out2.path());

  for (const char* name : {"records.tsv", "vocab.txt", "answers.txt"}) {
    CHECK(read_file(out1.path() / name) == read_file(out2.path() / name));
  }
  CHECK(b2.samples.size() == b.samples.size());
  CHECK(b2.qtype_names == b.qtype_names);
}

TEST_CASE("externalized features move to a shared file") {
  testing::TempDir dir("data_ext");
  write_fixture(dir.path());
  // Drop the external record so every feature starts inline.
  std::string records = read_file(dir.path() / "records.tsv");
  std::string trimmed;
  for (const auto& line : split(records, '\n')) {
    if (!line.empty() && line.find("feat.txt") == std::string::npos) {
      trimmed += line;
      trimmed += '\n';
    }
  }
  write_file(dir.path() / "records.tsv", trimmed);
  DatasetBundle b = load_dataset(dir.path());

  testing::TempDir out("data_ext_out");
  write_dataset(b, out.path(), /*externalize_features=*/true);
  DatasetBundle b2 = load_dataset(out.path());
  REQUIRE(b2.samples.size() == b.samples.size());
  FeatureStore store(b2.base_dir);
  for (std::size_t i = 0; i < b2.samples.size(); ++i) {
    const FeatureRef& ref = b2.samples[i].feature;
    REQUIRE_FALSE(ref.is_inline());
    const Tensor& f = store.block(ref.path, ref.row);
    CHECK(f.values() == b.samples[i].feature.inline_features.values());
  }
}

TEST_CASE("bundle validation catches broken records") {
  testing::TempDir dir("data_val");
  write_fixture(dir.path());
  DatasetBundle b = load_dataset(dir.path());

  DatasetBundle bad = b;
  bad.samples[0].qtype = 9;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  bad = b;
  bad.samples[0].answer_scores.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  bad = b;
  bad.samples[0].tokens.pop_back();
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  bad = b;
  bad.samples[2].feature.path.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("feature store failures name the file and block") {
  testing::TempDir dir("data_store");
  write_file(dir.path() / "feat.txt", "shape: 1 2\n1 2\n");
  FeatureStore store(dir.path());
  CHECK(store.block("feat.txt", 0).values() == std::vector<double>{1, 2});
  CHECK_THROWS_AS(store.block("feat.txt", 1), IoError);
  CHECK_THROWS_AS(store.block("missing.txt", 0), IoError);
}
