#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "attviz/cli.hpp"
#include "attviz/number_format.hpp"
#include "attviz/service.hpp"
#include "process.hpp"

using namespace attviz;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "attviz");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  TempDir() : path(fs::temp_directory_path() / ("attviz_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  fs::path path;
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

int free_port() {
  VizDataService svc;
  HttpFrontend probe(svc);
  return probe.bind("127.0.0.1", 0);
}

bool wait_for_meta(int port, int expect_status, Json* body = nullptr) {
  httplib::Client c("127.0.0.1", port);
  c.set_connection_timeout(0, 200000);
  for (int i = 0; i < 150; ++i) {
    if (auto r = c.Get("/api/meta"); r && r->status == expect_status) {
      if (body) *body = Json::parse(r->body);
      return true;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(40));
  }
  return false;
}

}  // namespace

TEST_CASE("csv field quoting") {
  CHECK(cli::csv_field("plain") == "plain");
  CHECK(cli::csv_field("a,b") == "\"a,b\"");
  CHECK(cli::csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(cli::csv_field(" lead") == "\" lead\"");
  CHECK(cli::csv_field("") == "");
}

TEST_CASE("sample then validate") {
  TempDir tmp;
  const auto path = tmp.file("sample.json");
  auto r = run_cli({"sample", "--out", path});
  CHECK(r.code == 0);
  r = run_cli({"validate", path});
  CHECK(r.code == 0);
  CHECK(Json::parse(r.out)["is_valid"] == true);
  CHECK(Json::parse(r.out)["violations"].empty());

  const auto again = tmp.file("again.json");
  run_cli({"sample", "--out", again});
  CHECK(slurp(path) == slurp(again));

  r = run_cli({"sample", "--tokens", "0"});
  CHECK(r.code == 2);
  r = run_cli({"sample", "--labels", "solo"});
  CHECK(r.code == 2);

  r = run_cli({"sample", "--tokens", "3", "--heads", "2", "--docs", "1", "--labels", "a,b", "--seed", "7"});
  CHECK(r.code == 0);
  const auto ds = parse_export(r.out);
  CHECK(ds.documents.size() == 1);
  CHECK(ds.documents[0].tokens.size() == 3);
  CHECK(ds.labels == std::vector<std::string>{"a", "b"});
}

TEST_CASE("validate exit codes") {
  TempDir tmp;
  Json j = Json::parse(serialize_dataset(generate_sample({.tokens = 3, .documents = 1})));
  j["documents"][0]["attention"][0] = {0.1, 0.2};
  const auto ragged = tmp.file("ragged.json");
  write(ragged, j.dump());

  auto r = run_cli({"validate", ragged});
  CHECK(r.code == 1);
  CHECK(Json::parse(r.out)["violations"][0]["code"] == "RaggedMatrix");
  CHECK(r.err.find("RaggedMatrix") != std::string::npos);

  r = run_cli({"validate", ragged, "--format", "csv"});
  CHECK(r.code == 1);
  CHECK(r.out.rfind("code,document_id,path,message\nRaggedMatrix,doc-0000,", 0) == 0);

  r = run_cli({"validate", tmp.file("missing.json")});
  CHECK(r.code == 2);
  r = run_cli({"validate"});
  CHECK(r.code == 2);
  r = run_cli({});
  CHECK(r.code == 2);
  r = run_cli({"bogus"});
  CHECK(r.code == 2);
}

TEST_CASE("aggregate csv matches the engine") {
  TempDir tmp;
  const auto path = tmp.file("s.json");
  const Dataset ds = generate_sample({.tokens = 7, .heads = 5, .labels = {"a", "b"}, .documents = 3, .seed = 3});
  write(path, serialize_dataset(ds));

  auto r = run_cli({"aggregate", path, "--schemes", "mean", "--format", "csv"});
  REQUIRE(r.code == 0);
  std::stringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "doc_id,token_index,token,mean");
  for (const auto& doc : ds.documents) {
    const auto mean = aggregate(doc.attention, Scheme::kMean);
    for (std::size_t j = 0; j < doc.tokens.size(); ++j) {
      REQUIRE(std::getline(lines, line));
      const auto cols = split(line, ',');
      REQUIRE(cols.size() == 4);
      CHECK(cols[0] == doc.id);
      CHECK(cols[1] == std::to_string(j));
      CHECK(cols[2] == doc.tokens[j]);
      CHECK(parse_double(cols[3]) == mean[j]);
    }
  }
  CHECK_FALSE(std::getline(lines, line));

  r = run_cli({"aggregate", path, "--schemes", "min,max,std,ent,mean", "--format", "csv"});
  CHECK(r.out.substr(0, r.out.find('\n')) == "doc_id,token_index,token,mean,ent,std,max,min");

  const auto out1 = tmp.file("a1.csv"), out2 = tmp.file("a2.csv");
  CHECK(run_cli({"aggregate", path, "--format", "csv", "--out", out1}).code == 0);
  CHECK(run_cli({"aggregate", path, "--format", "csv", "--out", out2}).code == 0);
  CHECK(slurp(out1) == slurp(out2));
  CHECK(slurp(out1) == cli::render_aggregates_csv(ds, SchemeSet::all()));

  r = run_cli({"aggregate", path, "--schemes", "ent,max"});
  REQUIRE(r.code == 0);
  const Json js = Json::parse(r.out);
  CHECK(js["schemes"] == Json{"ent", "max"});
  CHECK(js["rows"].size() == 21);
  CHECK(js["rows"][0]["ent"].get<double>() == aggregate(ds.documents[0].attention, Scheme::kEnt)[0]);

  CHECK(run_cli({"aggregate", path, "--schemes", "median"}).code == 2);

  const auto bad = tmp.file("bad.json");
  write(bad, "{\"version\":\"9\"}");
  r = run_cli({"aggregate", bad});
  CHECK(r.code == 1);
  CHECK(r.err.find("UnsupportedVersion") != std::string::npos);
}

TEST_CASE("serve subprocess") {
  TempDir tmp;
  const auto path = tmp.file("preload.json");
  write(path, serialize_dataset(generate_sample({.documents = 3, .seed = 1})));

  SUBCASE("preloaded") {
    const int port = free_port();
    testing::Child child({ATTVIZ_BINARY, "serve", path, "--port", std::to_string(port)}, {},
                         tmp.file("serve.log"));
    REQUIRE(child.started());
    Json meta;
    REQUIRE(wait_for_meta(port, 200, &meta));
    CHECK(meta["document_count"] == 3);
    CHECK(meta["source_name"] == "preload.json");
    child.signal(SIGTERM);
    CHECK(child.wait(std::chrono::seconds(10)) == 0);
  }
  SUBCASE("empty until upload, port from environment") {
    const int port = free_port();
    testing::Child child({ATTVIZ_BINARY, "serve"}, {"ATTVIZ_PORT=" + std::to_string(port)},
                         tmp.file("serve.log"));
    REQUIRE(wait_for_meta(port, 503));
    httplib::Client c("127.0.0.1", port);
    auto r = c.Post("/api/datasets", slurp(path), "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
    Json meta;
    REQUIRE(wait_for_meta(port, 200, &meta));
    CHECK(meta["document_count"] == 3);
    child.signal(SIGINT);
    CHECK(child.wait(std::chrono::seconds(10)) == 0);
  }
  SUBCASE("occupied port") {
    VizDataService svc;
    HttpFrontend holder(svc);
    const int port = holder.bind("127.0.0.1", 0);
    // a bound but idle socket does not block SO_REUSEADDR binds, so listen
    std::thread runner([&] { holder.run(); });
    holder.wait_until_ready();
    testing::Child child({ATTVIZ_BINARY, "serve", "--port", std::to_string(port)}, {},
                         tmp.file("serve.log"));
    CHECK(child.wait(std::chrono::seconds(10)) == 2);
    CHECK(slurp(tmp.file("serve.log")).find("could not bind") != std::string::npos);
    holder.stop();
    runner.join();
  }
  SUBCASE("invalid preload") {
    const auto bad = tmp.file("bad.json");
    write(bad, "{\"version\":\"1.0\",\"labels\":[\"a\",\"b\"],\"documents\":[{}]}");
    testing::Child child({ATTVIZ_BINARY, "serve", bad, "--port", std::to_string(free_port())}, {},
                         tmp.file("serve.log"));
    CHECK(child.wait(std::chrono::seconds(10)) == 1);
    CHECK(slurp(tmp.file("serve.log")).find("SchemaViolation") != std::string::npos);
  }
  SUBCASE("flag beats environment") {
    const int port = free_port();
    testing::Child child({ATTVIZ_BINARY, "serve", path, "--port", std::to_string(port)},
                         {"ATTVIZ_PORT=not-a-port"}, tmp.file("serve.log"));
    REQUIRE(wait_for_meta(port, 200));
    child.signal(SIGTERM);
    CHECK(child.wait(std::chrono::seconds(10)) == 0);
  }
  SUBCASE("port range") {
    testing::Child child({ATTVIZ_BINARY, "serve", "--port", "70000"}, {}, tmp.file("serve.log"));
    CHECK(child.wait(std::chrono::seconds(10)) == 2);
  }
}
