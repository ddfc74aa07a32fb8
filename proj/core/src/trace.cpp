#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gradmarket/engine.hpp"

namespace gradmarket {

namespace {

using ordered_json = nlohmann::ordered_json;

const char* arch_name(ModelArch arch) {
  return arch == ModelArch::logreg ? "logreg" : "mlp";
}

ModelArch parse_arch(const std::string& name) {
  if (name == "logreg") return ModelArch::logreg;
  if (name == "mlp") return ModelArch::mlp;
  throw IoError("trace: unknown model architecture '" + name + "'");
}

void atomic_write(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("cannot write " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write " + path);
}

}  // namespace

void write_trace(const std::string& path, const RunTrace& trace) {
  std::ostringstream out;

  ordered_json header;
  header["record"] = "header";
  header["config_hash"] = trace.config_hash;
  header["run_seed"] = trace.run_seed;
  header["num_sellers"] = trace.num_sellers;
  header["num_rounds"] = trace.num_rounds;
  std::vector<int> malicious, sybil;
  for (const auto& role : trace.roles) {
    if (role.malicious) malicious.push_back(role.id);
    if (role.sybil_group >= 0) sybil.push_back(role.id);
  }
  header["malicious"] = malicious;
  header["sybil"] = sybil;
  out << header.dump() << "\n";

  for (const auto& round : trace.rounds) {
    ordered_json j;
    j["record"] = "round";
    j["t"] = round.round;
    j["sampled"] = round.sampled;
    j["selected"] = round.selected;
    j["weights"] = round.weights;
    j["scores"] = round.scores;
    j["divergence"] = round.divergence;
    j["payments"] = round.payments;
    j["cost"] = round.cost;
    j["accuracy"] = round.accuracy;
    if (round.asr) {
      j["asr"] = *round.asr;
    } else {
      j["asr"] = nullptr;
    }
    out << j.dump() << "\n";
  }

  ordered_json fin;
  fin["record"] = "final";
  fin["model"] = {{"arch", arch_name(trace.final_model.arch)},
                  {"input_dim", trace.final_model.input_dim},
                  {"num_classes", trace.final_model.num_classes},
                  {"hidden", trace.final_model.hidden},
                  {"values", trace.final_model.values}};
  out << fin.dump() << "\n";

  atomic_write(path, out.str());
}

RunTrace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace: " + path);

  RunTrace trace;
  bool have_header = false;
  bool have_final = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      const std::string record = j.at("record").get<std::string>();
      if (record == "header") {
        trace.config_hash = j.at("config_hash").get<std::string>();
        trace.run_seed = j.at("run_seed").get<std::uint64_t>();
        trace.num_sellers = j.at("num_sellers").get<int>();
        trace.num_rounds = j.at("num_rounds").get<int>();
        if (trace.num_sellers < 0) throw IoError("negative seller count");
        trace.roles.assign(static_cast<std::size_t>(trace.num_sellers), SellerRole{});
        for (int i = 0; i < trace.num_sellers; ++i) trace.roles[i].id = i;
        for (int id : j.at("malicious").get<std::vector<int>>()) {
          trace.roles.at(static_cast<std::size_t>(id)).malicious = true;
        }
        for (int id : j.at("sybil").get<std::vector<int>>()) {
          trace.roles.at(static_cast<std::size_t>(id)).sybil_group = 0;
        }
        have_header = true;
      } else if (record == "round") {
        RoundLedger r;
        r.round = j.at("t").get<int>();
        r.sampled = j.at("sampled").get<std::vector<int>>();
        r.selected = j.at("selected").get<std::vector<int>>();
        r.weights = j.at("weights").get<std::vector<double>>();
        r.scores = j.at("scores").get<std::vector<double>>();
        r.divergence = j.at("divergence").get<std::vector<double>>();
        r.payments = j.at("payments").get<std::vector<int>>();
        r.cost = j.at("cost").get<int>();
        r.accuracy = j.at("accuracy").get<double>();
        if (!j.at("asr").is_null()) r.asr = j.at("asr").get<double>();
        trace.rounds.push_back(std::move(r));
      } else if (record == "final") {
        const auto& m = j.at("model");
        trace.final_model.arch = parse_arch(m.at("arch").get<std::string>());
        trace.final_model.input_dim = m.at("input_dim").get<int>();
        trace.final_model.num_classes = m.at("num_classes").get<int>();
        trace.final_model.hidden = m.at("hidden").get<int>();
        trace.final_model.values = m.at("values").get<std::vector<double>>();
        have_final = true;
      } else {
        throw IoError("unknown record kind '" + record + "'");
      }
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      throw IoError(path + ":" + std::to_string(line_no) +
                    ": malformed trace record: " + e.what());
    }
  }
  if (!have_header || !have_final) {
    throw IoError(path + ": incomplete trace (missing header or final record)");
  }
  if (static_cast<int>(trace.rounds.size()) != trace.num_rounds) {
    throw IoError(path + ": round count does not match the header");
  }
  return trace;
}

}  // namespace gradmarket
