#include "xmodal/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace xmodal {

using json = nlohmann::json;

void RunReport::aggregate() {
  std::vector<double> f1, acc;
  for (const auto& f : folds) {
    f1.push_back(f.macro_f1);
    acc.push_back(f.accuracy);
  }
  const auto a = mean_std(f1), b = mean_std(acc);
  mean_macro_f1 = a.mean;
  std_macro_f1 = a.std;
  mean_accuracy = b.mean;
  std_accuracy = b.std;
}

Confusion RunReport::joint_confusion() const {
  const auto k = static_cast<Eigen::Index>(class_map.size());
  Confusion total = Confusion::Zero(k, k);
  for (const auto& f : folds) {
    if (f.confusion.rows() != k) throw ShapeMismatch("fold confusion size differs from the class map");
    total += f.confusion;
  }
  return total;
}

std::vector<std::string> RunReport::subjects() const {
  std::vector<std::string> s;
  for (const auto& f : folds) s.push_back(f.subject);
  std::sort(s.begin(), s.end());
  return s;
}

json to_json(const FoldReport& f) {
  json conf = json::array();
  for (Eigen::Index r = 0; r < f.confusion.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < f.confusion.cols(); ++c) row.push_back(f.confusion(r, c));
    conf.push_back(row);
  }
  return {{"subject", f.subject},
          {"macro_f1", f.macro_f1},
          {"accuracy", f.accuracy},
          {"confusion", conf},
          {"n_windows", f.n_windows},
          {"params", f.params},
          {"alpha", f.alpha ? json(*f.alpha) : json(nullptr)},
          {"val_subject", f.val_subject},
          {"best_epoch", f.best_epoch},
          {"train_seconds", f.train_seconds}};
}

json to_json(const RunReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) folds.push_back(to_json(f));
  json joint = json::array();
  if (!r.folds.empty()) {
    const Confusion c = r.joint_confusion();
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < c.cols(); ++j) row.push_back(c(i, j));
      joint.push_back(row);
    }
  }
  return {{"config", r.config},
          {"class_map", r.class_map},
          {"folds", folds},
          {"mean_macro_f1", r.mean_macro_f1},
          {"std_macro_f1", r.std_macro_f1},
          {"mean_accuracy", r.mean_accuracy},
          {"std_accuracy", r.std_accuracy},
          {"joint_confusion", joint}};
}

std::vector<std::string> validate_run_report(const json& j) {
  std::vector<std::string> errs;
  auto need = [&](const json& obj, const char* key, auto&& check, const char* what, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
      errs.push_back(where + ": missing '" + key + "'");
      return false;
    }
    if (!check(obj.at(key))) {
      errs.push_back(where + ": '" + key + "' must be " + what);
      return false;
    }
    return true;
  };
  auto is_num = [](const json& v) { return v.is_number(); };
  auto is_unit = [](const json& v) { return v.is_number() && v.get<double>() >= 0 && v.get<double>() <= 1; };
  auto is_obj = [](const json& v) { return v.is_object(); };
  auto is_arr = [](const json& v) { return v.is_array(); };
  auto is_str = [](const json& v) { return v.is_string(); };
  auto is_count = [](const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long>() >= 0); };
  auto is_alpha = [](const json& v) {
    return v.is_null() || (v.is_number() && v.get<double>() >= 0 && v.get<double>() <= 1);
  };

  if (!j.is_object()) return {"document must be an object"};
  need(j, "config", is_obj, "an object", "report");
  need(j, "mean_macro_f1", is_unit, "a number in [0, 1]", "report");
  need(j, "std_macro_f1", is_num, "a number", "report");
  need(j, "mean_accuracy", is_unit, "a number in [0, 1]", "report");
  need(j, "std_accuracy", is_num, "a number", "report");
  if (!need(j, "folds", is_arr, "an array", "report")) return errs;

  std::set<std::string> seen;
  for (std::size_t i = 0; i < j["folds"].size(); ++i) {
    const auto& f = j["folds"][i];
    const std::string where = "folds[" + std::to_string(i) + "]";
    if (need(f, "subject", is_str, "a string", where) && !seen.insert(f["subject"].get<std::string>()).second)
      errs.push_back(where + ": subject appears in more than one fold");
    need(f, "macro_f1", is_unit, "a number in [0, 1]", where);
    need(f, "accuracy", is_unit, "a number in [0, 1]", where);
    need(f, "n_windows", is_count, "a non-negative integer", where);
    need(f, "params", is_count, "a non-negative integer", where);
    need(f, "alpha", is_alpha, "null or a number in [0, 1]", where);
    if (need(f, "confusion", is_arr, "an array", where)) {
      const auto& c = f["confusion"];
      long total = 0;
      bool ok = true;
      for (const auto& row : c) {
        if (!row.is_array() || row.size() != c.size()) {
          ok = false;
          break;
        }
        for (const auto& v : row) {
          if (!is_count(v)) ok = false;
          else total += v.get<long>();
        }
      }
      if (!ok) errs.push_back(where + ": confusion must be a square matrix of counts");
      else if (f.contains("n_windows") && is_count(f["n_windows"]) && total != f["n_windows"].get<long>())
        errs.push_back(where + ": confusion total differs from n_windows");
    }
  }
  return errs;
}

RunReport run_report_from_json(const json& j) {
  const auto errs = validate_run_report(j);
  if (!errs.empty()) throw FormatError("run report: " + errs.front());
  RunReport r;
  r.config = j.at("config");
  if (j.contains("class_map")) r.class_map = j.at("class_map").get<std::vector<std::string>>();
  for (const auto& f : j.at("folds")) {
    FoldReport fr;
    fr.subject = f.at("subject").get<std::string>();
    fr.macro_f1 = f.at("macro_f1").get<double>();
    fr.accuracy = f.at("accuracy").get<double>();
    const auto& c = f.at("confusion");
    const auto k = static_cast<Eigen::Index>(c.size());
    fr.confusion = Confusion::Zero(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) fr.confusion(a, b) = c[a][b].get<long>();
    fr.n_windows = f.at("n_windows").get<std::size_t>();
    fr.params = f.at("params").get<std::size_t>();
    if (!f.at("alpha").is_null()) fr.alpha = f.at("alpha").get<double>();
    fr.val_subject = f.value("val_subject", std::string());
    fr.best_epoch = f.value("best_epoch", -1);
    fr.train_seconds = f.value("train_seconds", 0.0);
    r.folds.push_back(std::move(fr));
  }
  if (r.class_map.empty() && !r.folds.empty())
    for (Eigen::Index k = 0; k < r.folds.front().confusion.rows(); ++k) r.class_map.push_back(std::to_string(k));
  r.mean_macro_f1 = j.at("mean_macro_f1").get<double>();
  r.std_macro_f1 = j.at("std_macro_f1").get<double>();
  r.mean_accuracy = j.at("mean_accuracy").get<double>();
  r.std_accuracy = j.at("std_accuracy").get<double>();
  return r;
}

RunReport read_run_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    json j;
    in >> j;
    return run_report_from_json(j);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_run_report(const RunReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << to_json(r).dump(2) << "\n";
}

std::vector<ImprovementRow> improvement_table(const std::vector<std::pair<std::string, RunReport>>& runs,
                                              const RunReport& baseline) {
  const auto subjects = baseline.subjects();
  std::vector<ImprovementRow> rows;
  for (const auto& [name, run] : runs) {
    if (run.subjects() != subjects) throw SubjectMismatch("run '" + name + "' covers different subjects than the baseline");
    ImprovementRow row;
    row.name = name;
    row.mean_macro_f1 = run.mean_macro_f1;
    row.std_macro_f1 = run.std_macro_f1;
    if (run.config.contains("alpha") && run.config["alpha"].is_number()) row.alpha = run.config["alpha"].get<double>();
    row.improvement = 100.0 * (run.mean_macro_f1 - baseline.mean_macro_f1);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string improvement_csv(const std::vector<ImprovementRow>& rows) {
  std::ostringstream out;
  out << "run,macro_f1_mean,macro_f1_std,alpha,improvement\n";
  for (const auto& r : rows)
    out << r.name << ',' << fixed(100 * r.mean_macro_f1, 2) << ',' << fixed(100 * r.std_macro_f1, 2) << ','
        << (r.alpha ? fixed(*r.alpha, 2) : "") << ',' << fixed(r.improvement, 2) << '\n';
  return out.str();
}

std::string improvement_text(const std::vector<ImprovementRow>& rows, const std::string& baseline_name) {
  std::size_t width = 3;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream out;
  out << "baseline: " << baseline_name << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %16s  %6s  %12s\n", static_cast<int>(width), "run", "macro F1 (%)",
                "alpha", "improvement");
  out << line;
  for (const auto& r : rows) {
    const std::string f1 = fixed(100 * r.mean_macro_f1, 2) + " +- " + fixed(100 * r.std_macro_f1, 2);
    const std::string alpha = r.alpha ? fixed(*r.alpha, 1) : "-";
    const std::string imp = (r.improvement >= 0 ? "+" : "") + fixed(r.improvement, 2);
    std::snprintf(line, sizeof line, "%-*s  %16s  %6s  %12s\n", static_cast<int>(width), r.name.c_str(), f1.c_str(),
                  alpha.c_str(), imp.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace xmodal
