#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "acceptance.hpp"
#include "hsmix/io.hpp"

namespace hsmix::acceptance {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every data file of a run directory, manifest excluded.
std::map<std::string, std::string> data_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != "manifest.json") out[e.path().filename().string()] = slurp(e.path());
  return out;
}

}  // namespace

Result criterion_determinism() {
  if (opts.hsmix.empty() || !fs::exists(opts.hsmix)) return {false, "CLI executable not given (--hsmix)"};
  const fs::path root = fs::temp_directory_path() / "hsmix_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const json config = {
      {"seed", 20240917},
      {"scaling", {{"dim", 2}, {"n2", 32}}},
      {"simulate", {{"counts", {12, 12}}, {"diameters", {0.12, 0.12}}, {"t_mft", 1.0}}},
      {"pde", {{"nx", 6}, {"nv", 8}, {"t_end", 0.1}, {"steps", 2}}},
      {"pseudo", {{"trials", 200}, {"k", 4}}},
      {"duhamel", {{"k", 2}, {"samples", 20000}}},
      {"chaos", {{"n2", {16, 32}}, {"members", 100}, {"probes", 8}, {"pde_reference", false}}},
      {"pathology", {{"seeds", 100}}}};
  write_text_file(root / "config.json", config.dump(2));
  const std::vector<std::string> subs = {"simulate",   "scaling",    "pde-solve",     "pseudo-compare",
                                         "duhamel",    "chaos-test", "pathology-scan"};
  std::string detail;
  bool pass = true;
  for (const auto& sub : subs) {
    std::vector<std::map<std::string, std::string>> runs;
    for (int rep = 0; rep < 3; ++rep) {
      const fs::path out = root / (sub + "_" + std::to_string(rep));
      // Third run changes the thread count; outputs must not move.
      const std::string threads = rep == 2 ? "3" : "1";
      const std::string cmd = "\"" + opts.hsmix + "\" " + sub + " \"" + (root / "config.json").string() +
                              "\" --out \"" + out.string() + "\" --threads " + threads + " > \"" +
                              (root / (sub + ".log")).string() + "\" 2>&1";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) {
        pass = false;
        detail += sub + ": exit " + std::to_string(rc) + "; ";
        break;
      }
      runs.push_back(data_files(out));
    }
    if (runs.size() != 3) continue;
    const bool same = runs[0] == runs[1] && runs[0] == runs[2] && !runs[0].empty();
    pass = pass && same;
    detail += sub + " " + (same ? "identical" : "DIFFERS") + " (" + std::to_string(runs[0].size()) + " files); ";
  }
  return {pass, detail};
}

}  // namespace hsmix::acceptance
