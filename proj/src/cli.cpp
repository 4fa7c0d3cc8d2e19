#include "attviz/cli.hpp"

#include <charconv>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "attviz/number_format.hpp"
#include "attviz/service.hpp"

namespace attviz::cli {

namespace {

constexpr int kDefaultPort = 8080;

struct Options {
  std::string input;
  std::string out;
  std::string schemes = "mean,ent,std,max,min";
  std::string format = "json";
  std::string host = "127.0.0.1";
  std::optional<int> port;
  std::string static_dir;
  std::int64_t tokens = 16;
  std::int64_t heads = 4;
  std::int64_t docs = 4;
  std::uint64_t seed = 0;
  std::string labels = "business,entertainment,politics,sport,tech";
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw UsageError("error while reading " + path);
  return ss.str();
}

void write_output(const Options& opt, const std::string& text, std::ostream& out) {
  if (opt.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(opt.out, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot write " + opt.out);
  f << text;
  if (!f) throw UsageError("error while writing " + opt.out);
}

std::vector<std::string> split_labels(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_validate(const Options& opt, std::ostream& out, std::ostream& err) {
  const auto report = validate_export(read_file(opt.input));
  err << opt.input << ": " << report.to_text();
  if (opt.format == "json") {
    out << report.to_json().dump(2) << '\n';
  } else {
    out << "code,document_id,path,message\n";
    for (const auto& v : report.violations) {
      out << csv_field(std::string(to_string(v.code))) << ',' << csv_field(v.document_id.value_or(""))
          << ',' << csv_field(v.path) << ',' << csv_field(v.message) << '\n';
    }
  }
  return report.is_valid() ? kExitOk : kExitDataError;
}

int cmd_aggregate(const Options& opt, std::ostream& out, std::ostream& err) {
  SchemeSet schemes;
  try {
    schemes = SchemeSet::parse(opt.schemes);
  } catch (const UnknownScheme& e) {
    throw UsageError(e.what());
  }
  if (schemes.empty()) throw UsageError("--schemes must name at least one scheme");

  const auto raw = read_file(opt.input);
  Dataset ds;
  try {
    ds = parse_export(raw);
  } catch (const ExportError&) {
    err << opt.input << ": " << validate_export(raw).to_text();
    return kExitDataError;
  }
  write_output(opt, opt.format == "csv" ? render_aggregates_csv(ds, schemes)
                                        : render_aggregates_json(ds, schemes),
               out);
  return kExitOk;
}

int cmd_sample(const Options& opt, std::ostream& out) {
  SampleParams params{
      .tokens = opt.tokens,
      .heads = opt.heads,
      .labels = split_labels(opt.labels),
      .documents = opt.docs,
      .seed = opt.seed,
  };
  Dataset ds;
  try {
    ds = generate_sample(params);
  } catch (const InvalidDimension& e) {
    throw UsageError(e.what());
  }
  write_output(opt, serialize_dataset(ds) + "\n", out);
  return kExitOk;
}

int resolve_port(const Options& opt) {
  if (opt.port) return *opt.port;
  if (const char* env = std::getenv("ATTVIZ_PORT"); env && *env) {
    int port = 0;
    std::string_view s(env);
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), port);
    if (ec != std::errc{} || end != s.data() + s.size() || port < 1 || port > 65535) {
      throw UsageError("ATTVIZ_PORT must be an integer in [1, 65535]");
    }
    return port;
  }
  return kDefaultPort;
}

int cmd_serve(const Options& opt, std::ostream& err) {
  ServiceConfig config;
  if (!opt.static_dir.empty()) config.static_dir = opt.static_dir;
  VizDataService service(config);

  if (!opt.input.empty()) {
    const auto raw = read_file(opt.input);
    try {
      service.load(parse_export(raw), std::filesystem::path(opt.input).filename().string());
    } catch (const ExportError&) {
      err << opt.input << ": " << validate_export(raw).to_text();
      return kExitDataError;
    }
  }

  const int port = resolve_port(opt);
  HttpFrontend frontend(service);
  int bound = 0;
  try {
    bound = frontend.bind(opt.host, port);
  } catch (const PortInUse& e) {
    err << "attviz serve: " << e.what() << '\n';
    return kExitUsageError;
  }

  // SIGINT/SIGTERM are taken synchronously by a watcher thread so that
  // shutdown runs outside signal context.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::thread([&frontend, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    frontend.stop();
  }).detach();

  err << "attviz: listening on http://" << opt.host << ':' << bound << '\n' << std::flush;
  frontend.run();
  return kExitOk;
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.empty()) return s;
  const bool plain = s.find_first_of(",\"\r\n") == std::string::npos && s.front() != ' ' &&
                     s.back() != ' ';
  if (plain) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string render_aggregates_csv(const Dataset& ds, SchemeSet schemes) {
  const auto members = schemes.members();
  std::string out = "doc_id,token_index,token";
  for (Scheme s : members) {
    out += ',';
    out += scheme_name(s);
  }
  out += '\n';
  for (const auto& doc : ds.documents) {
    const auto rows = series(doc.attention, schemes);
    for (const auto& row : rows) {
      out += csv_field(doc.id);
      out += ',';
      out += std::to_string(row.token_index);
      out += ',';
      out += csv_field(doc.tokens[row.token_index]);
      for (Scheme s : members) {
        out += ',';
        out += format_shortest(*row.get(s));
      }
      out += '\n';
    }
  }
  return out;
}

std::string render_aggregates_json(const Dataset& ds, SchemeSet schemes) {
  const auto members = schemes.members();
  Json rows = Json::array();
  for (const auto& doc : ds.documents) {
    for (const auto& row : series(doc.attention, schemes)) {
      Json r;
      r["doc_id"] = doc.id;
      r["token_index"] = row.token_index;
      r["token"] = doc.tokens[row.token_index];
      for (Scheme s : members) r[std::string(scheme_name(s))] = *row.get(s);
      rows.push_back(std::move(r));
    }
  }
  Json out;
  out["schemes"] = Json::array();
  for (Scheme s : members) out["schemes"].push_back(std::string(scheme_name(s)));
  out["rows"] = std::move(rows);
  return out.dump() + "\n";
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Self-attention export toolkit: validate, aggregate, sample, serve"};
  app.require_subcommand(1);

  auto* validate = app.add_subcommand("validate", "Check an export file against the schema");
  validate->add_option("input", opt.input, "Export file")->required();
  validate->add_option("--format", opt.format, "Report format on stdout")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* aggregate = app.add_subcommand("aggregate", "Per-token aggregates for every document");
  aggregate->add_option("input", opt.input, "Export file")->required();
  aggregate->add_option("--schemes", opt.schemes, "Comma list of mean,ent,std,max,min");
  aggregate->add_option("--format", opt.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  aggregate->add_option("--out", opt.out, "Output path (default stdout)");

  auto* sample = app.add_subcommand("sample", "Write a synthetic export file");
  sample->add_option("--tokens", opt.tokens, "Tokens per document");
  sample->add_option("--heads", opt.heads, "Attention heads per document");
  sample->add_option("--docs", opt.docs, "Number of documents");
  sample->add_option("--labels", opt.labels, "Comma list of class labels");
  sample->add_option("--seed", opt.seed, "Random seed");
  sample->add_option("--out", opt.out, "Output path (default stdout)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP data service");
  serve->add_option("input", opt.input, "Export file to preload");
  serve->add_option("--host", opt.host, "Listen address");
  serve->add_option("--port", opt.port, "Listen port (env ATTVIZ_PORT)")->check(CLI::Range(1, 65535));
  serve->add_option("--static-dir", opt.static_dir, "Directory with the UI bundle")
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsageError;
  }

  try {
    if (*validate) return cmd_validate(opt, out, err);
    if (*aggregate) return cmd_aggregate(opt, out, err);
    if (*sample) return cmd_sample(opt, out);
    if (*serve) return cmd_serve(opt, err);
  } catch (const UsageError& e) {
    err << "attviz: " << e.what() << '\n';
    return kExitUsageError;
  }
  return kExitUsageError;
}

}  // namespace attviz::cli
