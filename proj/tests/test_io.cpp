#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "bestsubset/serialize.hpp"
#include "test_support.hpp"

using namespace bestsubset;
using namespace bestsubset::testing;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::IoError;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("bestsubset_test_io_" + name);
}

}  // namespace

TEST(Csv, ParsesWithAndWithoutHeader) {
  std::istringstream a("x1,x2,y\n1,2,3\n4,5,6\n");
  std::vector<std::string> header;
  const Dataset d = parse_csv(a, &header);
  EXPECT_EQ(header, (std::vector<std::string>{"x1", "x2", "y"}));
  ASSERT_EQ(d.n(), 2);
  ASSERT_EQ(d.p(), 2);
  EXPECT_EQ(d.X(1, 0), 4.0);
  EXPECT_EQ(d.y(0), 3.0);

  std::istringstream b("1, 2 ,3\r\n\n4,5,-6e-1\n");
  const Dataset e = parse_csv(b);
  EXPECT_EQ(e.n(), 2);
  EXPECT_EQ(e.y(1), -0.6);
  EXPECT_EQ(e.X(0, 1), 2.0);
}

TEST(Csv, ErrorsNameTheLine) {
  std::istringstream ragged("1,2,3\n4,5\n");
  const std::string m = message_of([&] { parse_csv(ragged); });
  EXPECT_NE(m.find("line 2"), std::string::npos) << m;
  std::istringstream junk("a,b\n1,2\n3,x\n");
  EXPECT_NE(message_of([&] { parse_csv(junk); }).find("line 3"), std::string::npos);
  std::istringstream empty("x,y\n");
  EXPECT_EQ(kind_of([&] { parse_csv(empty); }), ErrorKind::IoError);
  std::istringstream narrow("1\n2\n");
  EXPECT_EQ(kind_of([&] { parse_csv(narrow); }), ErrorKind::IoError);
  EXPECT_EQ(kind_of([] { read_csv("/nonexistent/file.csv"); }), ErrorKind::IoError);
}

TEST(Csv, RoundTripIsExact) {
  Dataset d = random_dataset(7, 4, 1);
  d.X(0, 0) = 0.1;
  d.X(1, 1) = 1e-300;
  d.y(2) = -123456789.125;
  std::ostringstream out;
  write_csv(out, d);
  EXPECT_EQ(out.str().substr(0, 12), "x1,x2,x3,x4,");
  std::istringstream in(out.str());
  const Dataset e = parse_csv(in);
  EXPECT_EQ(e.X, d.X);
  EXPECT_EQ(e.y, d.y);
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0 / 3.0), "0.3333333333333333");
}

TEST(Binary, LayoutBytes) {
  Dataset d;
  d.X.resize(1, 2);
  d.X << 1.0, 2.0;
  d.y.resize(1);
  d.y << -1.0;
  std::ostringstream out;
  write_binary(out, d);
  const std::string s = out.str();
  ASSERT_EQ(s.size(), 5u + 16u + 24u);
  EXPECT_EQ(s.substr(0, 5), "SSEL1");
  EXPECT_EQ(static_cast<unsigned char>(s[5]), 1u);   // n low byte
  EXPECT_EQ(static_cast<unsigned char>(s[13]), 2u);  // p low byte
  // 1.0 is 0x3FF0000000000000, little endian.
  EXPECT_EQ(static_cast<unsigned char>(s[21 + 7]), 0x3Fu);
  EXPECT_EQ(static_cast<unsigned char>(s[21 + 6]), 0xF0u);
  // -1.0 has the sign bit.
  EXPECT_EQ(static_cast<unsigned char>(s[37 + 7]), 0xBFu);
}

TEST(Binary, RoundTripAndDispatch) {
  const Dataset d = random_dataset(9, 5, 2);
  const auto bin = temp_file("a.ssel");
  const auto csv = temp_file("a.csv");
  write_binary(bin.string(), d);
  write_csv(csv.string(), d);
  for (const auto& path : {bin, csv}) {
    const Dataset e = read_dataset(path.string());
    EXPECT_EQ(e.X, d.X);
    EXPECT_EQ(e.y, d.y);
  }
  std::filesystem::remove(bin);
  std::filesystem::remove(csv);

  std::istringstream bad(std::string("SSEL2") + std::string(16, '\0'));
  EXPECT_EQ(kind_of([&] { read_binary(bad); }), ErrorKind::IoError);
  std::ostringstream out;
  write_binary(out, d);
  std::istringstream cut(out.str().substr(0, out.str().size() - 3));
  EXPECT_EQ(kind_of([&] { read_binary(cut); }), ErrorKind::IoError);
  std::istringstream extra(out.str() + "x");
  EXPECT_EQ(kind_of([&] { read_binary(extra); }), ErrorKind::IoError);
}

TEST(Json, NonFiniteRealsAsStrings) {
  EXPECT_EQ(real(kInf), json("inf"));
  EXPECT_EQ(real(-kInf), json("-inf"));
  EXPECT_EQ(real(std::nan("")), json("nan"));
  EXPECT_EQ(real(2.5), json(2.5));
  EXPECT_EQ(real_from(json("-inf"), "x"), -kInf);
  EXPECT_TRUE(std::isnan(real_from(json("nan"), "x")));
  EXPECT_EQ(kind_of([] { real_from(json("big"), "x"); }), ErrorKind::ConfigError);
}

TEST(Json, BoundsRoundTrip) {
  ParamBounds b;
  b.beta_inf = 2.5;
  b.beta_l1 = kInf;
  b.fit_inf = 7;
  b.fit_l1 = 30;
  b.per_coord_beta = std::vector<Interval>{{-1, 2}, {-kInf, kInf}};
  b.provenance = BoundsProvenance::warmstart;
  b.valid_certificate = false;
  const json j = to_json(b);
  EXPECT_EQ(j["beta_l1"], "inf");
  EXPECT_TRUE(j["per_coord_fit"].is_null());
  const ParamBounds c = bounds_from(json::parse(j.dump()));
  EXPECT_EQ(to_json(c), j);
  EXPECT_EQ(c.beta_box(1).second, 2.5);  // clipped by beta_inf

  json extra = j;
  extra["beta_l2"] = 1;
  EXPECT_NE(message_of([&] { bounds_from(extra); }).find("bounds.beta_l2"), std::string::npos);
  json missing = j;
  missing.erase("fit_l1");
  EXPECT_NE(message_of([&] { bounds_from(missing); }).find("bounds.fit_l1"), std::string::npos);
}

TEST(Json, SolveReportFields) {
  const Dataset d = random_dataset(20, 6, 3);
  const auto fo = multi_start(LeastSquaresLoss(d), 2, 3, FirstOrderConfig{});
  const SubsetProblem<LeastSquaresLoss> prob{LeastSquaresLoss(d), 2,
                                             qp_bounds(d, 2, fo.objective), {}, {}};
  const auto rep = bnb_solve(prob, std::optional<SparseSolution>(to_solution(fo, true)));
  const json j = to_json(rep);
  EXPECT_EQ(j["status"], "optimal");
  EXPECT_EQ(j["nodes_explored"], rep.nodes_explored);
  EXPECT_EQ(j["incumbent"]["support"].size(), 2u);
  const std::string tl = timeline_csv(rep, false);
  EXPECT_EQ(tl.substr(0, tl.find('\n')), "elapsed_s,ub,lb,gap,nodes");
  EXPECT_EQ(std::count(tl.begin(), tl.end(), '\n'), static_cast<long>(rep.timeline.size()) + 1);
}

TEST(Config, RoundTripAndHash) {
  RunConfig c;
  c.subcommand = "fit";
  c.global.seed = 17;
  c.global.threads = 2;
  FitParams f;
  f.input = "data.csv";
  f.k = 4;
  f.bounds = "warmstart:2";
  c.fit = f;
  BenchParams b;
  b.spec.example = Example::Ex3;
  b.spec.k0 = 0;
  b.methods = {"mio", "lasso"};
  b.k_grid = {2, 4};
  b.replications = 3;
  b.comparison.mio_time_limit_s = kInf;
  c.bench = b;

  const json j = to_json(c);
  const RunConfig back = run_config_from(json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  c.global.seed = 18;
  EXPECT_NE(config_hash(back), config_hash(c));

  const json m = manifest(back);
  EXPECT_EQ(m["config_hash"], config_hash(back));
  EXPECT_EQ(m["seed"], 17);
  EXPECT_EQ(m["config"], j);
}

TEST(Config, StrictKeys) {
  const json ok = json::parse(R"({"subcommand":"gen","gen":{"spec":{"example":"Ex1","n":10,"p":5,"snr":2,"seed":1}}})");
  const RunConfig c = run_config_from(ok);
  EXPECT_EQ(c.gen->spec.k0, 5);
  EXPECT_EQ(c.gen->format, "csv");

  json unknown = ok;
  unknown["gen"]["spec"]["sigma"] = 1;
  EXPECT_NE(message_of([&] { run_config_from(unknown); }).find("gen.spec.sigma"), std::string::npos);
  json missing = ok;
  missing["gen"]["spec"].erase("seed");
  const std::string m = message_of([&] { run_config_from(missing); });
  EXPECT_NE(m.find("missing field 'gen.spec.seed'"), std::string::npos) << m;
  json typed = ok;
  typed["gen"]["spec"]["n"] = "ten";
  EXPECT_EQ(kind_of([&] { run_config_from(typed); }), ErrorKind::ConfigError);
  json method = json::parse(
      R"({"subcommand":"bench","bench":{"spec":{"example":"Ex1","n":10,"p":5,"snr":2,"seed":1},"methods":["ridge"],"replications":1}})");
  EXPECT_EQ(kind_of([&] { run_config_from(method); }), ErrorKind::ConfigError);
}

TEST(Config, ErrorJsonShape) {
  const Error e(ErrorKind::SpecConflict, "k exceeds p");
  const json j = error_json(e);
  EXPECT_EQ(j["error"]["kind"], "SpecConflict");
  EXPECT_EQ(j["error"]["message"], "k exceeds p");
}
