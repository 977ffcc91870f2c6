#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rffi/errors.hpp"
#include "rffi/harness.hpp"

namespace rffi {

namespace {

namespace fs = std::filesystem;

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string fmt_num(double v) { return std::isfinite(v) ? fmt("%g", v) : ""; }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Series>& series, std::optional<std::pair<double, double>> yrange) {
  const double w = 640, h = 420, left = 70, right = 190, top = 40, bottom = 55;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (yrange) std::tie(ymin, ymax) = *yrange;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 5.0, xv = xmin + (xmax - xmin) * i / 5.0;
    o << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << fmt("%.1f", py(yv)) << "\" y2=\""
      << fmt("%.1f", py(yv)) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << fmt("%.1f", py(yv) + 4) << "\" text-anchor=\"end\">"
      << fmt("%.3g", yv) << "</text>\n";
    o << "<text x=\"" << fmt("%.1f", px(xv)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << fmt("%.3g", xv) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">" << xml_escape(xlabel)
    << "</text>\n";
  o << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(ylabel) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::string pts;
    for (auto [x, y] : series[s].points) pts += fmt("%.1f", px(x)) + "," + fmt("%.1f", py(y)) + " ";
    if (!pts.empty()) pts.pop_back();
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    for (auto [x, y] : series[s].points) {
      o << "<circle cx=\"" << fmt("%.1f", px(x)) << "\" cy=\"" << fmt("%.1f", py(y)) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(s);
    o << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 32 << "\" y1=\"" << ly << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[s].name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const std::vector<std::vector<double>>& values,
                    const std::string& value_format) {
  const double cell = std::clamp(360.0 / static_cast<double>(std::max<std::size_t>(1, col_labels.size())), 24.0, 48.0);
  const double left = 110, top = 60;
  const double w = left + cell * static_cast<double>(col_labels.size()) + 30;
  const double h = top + cell * static_cast<double>(row_labels.size()) + 30;
  double vmax = 0.0;
  for (const auto& r : values) {
    for (double v : r) vmax = std::max(vmax, v);
  }
  if (vmax <= 0.0) vmax = 1.0;

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
    << "</text>\n";
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    o << "<text x=\"" << left + cell * (static_cast<double>(c) + 0.5) << "\" y=\"" << top - 8
      << "\" text-anchor=\"middle\">" << xml_escape(col_labels[c]) << "</text>\n";
  }
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    const double y = top + cell * static_cast<double>(r);
    o << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
      << xml_escape(row_labels[r]) << "</text>\n";
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      const double v = values[r][c];
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v / vmax, 0.0, 1.0))));
      char color[16];
      std::snprintf(color, sizeof color, "#%02x%02xff", shade, shade);
      const double x = left + cell * static_cast<double>(c);
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
        << color << "\" stroke=\"#999\"/>\n";
      o << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
        << (v / vmax > 0.6 ? "white" : "black") << "\">" << fmt(value_format.c_str(), v) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

std::string snr_tag(double snr) {
  std::string s = fmt("%g", snr);
  std::replace(s.begin(), s.end(), '-', 'm');
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

bool is_accuracy_vs_snr(ExperimentKind k) {
  return k == ExperimentKind::SnrSweep || k == ExperimentKind::AugCompare || k == ExperimentKind::SlicingCompare;
}

}  // namespace

std::vector<const ReportRow*> Report::select(std::string_view architecture, std::string_view arm) const {
  std::vector<const ReportRow*> out;
  for (const auto& r : rows) {
    if (r.architecture == architecture && (arm.empty() || r.arm == arm)) out.push_back(&r);
  }
  return out;
}

nlohmann::json to_json(const Report& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"architecture", row.architecture},
                    {"arm", row.arm},
                    {"sf", row.sf},
                    {"snr_db", number_or_null(row.snr_db)},
                    {"n_pkt", row.n_pkt},
                    {"train_position", row.train_position},
                    {"test_position", row.test_position},
                    {"correct", row.correct},
                    {"total", row.total},
                    {"accuracy", number_or_null(row.accuracy)},
                    {"param_count", row.param_count},
                    {"inference_ms", number_or_null(row.inference_ms)},
                    {"confusion", row.confusion},
                    {"missed", row.missed}});
  }
  return {{"format", "rffi-report"},
          {"version", 1},
          {"kind", to_string(r.kind)},
          {"k_devices", r.k_devices},
          {"rows", rows},
          {"metadata", r.metadata}};
}

Report report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "rffi-report") throw DataError("not a report document");
    Report r;
    r.kind = experiment_from_string(j.at("kind").get<std::string>());
    r.k_devices = j.at("k_devices").get<int>();
    r.metadata = j.value("metadata", nlohmann::json::object());
    for (const auto& x : j.at("rows")) {
      ReportRow row;
      row.architecture = x.at("architecture").get<std::string>();
      row.arm = x.at("arm").get<std::string>();
      row.sf = x.at("sf").get<int>();
      row.snr_db = number_or_nan(x.at("snr_db"));
      row.n_pkt = x.at("n_pkt").get<std::size_t>();
      row.train_position = x.at("train_position").get<int>();
      row.test_position = x.at("test_position").get<int>();
      row.correct = x.at("correct").get<std::size_t>();
      row.total = x.at("total").get<std::size_t>();
      row.accuracy = number_or_nan(x.at("accuracy"));
      row.param_count = x.at("param_count").get<std::size_t>();
      row.inference_ms = number_or_nan(x.at("inference_ms"));
      row.confusion = x.at("confusion").get<std::vector<std::vector<std::size_t>>>();
      row.missed = x.at("missed").get<std::vector<std::size_t>>();
      r.rows.push_back(std::move(row));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

Report load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("cannot parse " + path + ": " + e.what());
  }
}

std::string report_csv(const Report& report) {
  std::ostringstream o;
  const auto acc = [](const ReportRow& r) { return fmt("%.6f", r.accuracy); };
  switch (report.kind) {
    case ExperimentKind::SnrSweep:
    case ExperimentKind::AugCompare:
    case ExperimentKind::SlicingCompare:
      o << "architecture,arm,sf,snr_db,accuracy,correct,total,param_count\n";
      for (const auto& r : report.rows) {
        o << r.architecture << ',' << r.arm << ',' << r.sf << ',' << fmt_num(r.snr_db) << ',' << acc(r) << ','
          << r.correct << ',' << r.total << ',' << r.param_count << '\n';
      }
      break;
    case ExperimentKind::MultiPacketCurve:
      o << "architecture,arm,sf,snr_db,n_pkt,accuracy,correct,total\n";
      for (const auto& r : report.rows) {
        o << r.architecture << ',' << r.arm << ',' << r.sf << ',' << fmt_num(r.snr_db) << ',' << r.n_pkt << ','
          << acc(r) << ',' << r.correct << ',' << r.total << '\n';
      }
      break;
    case ExperimentKind::PositionStudy:
      o << "architecture,sf,snr_db,train_position,test_position,accuracy,correct,total\n";
      for (const auto& r : report.rows) {
        o << r.architecture << ',' << r.sf << ',' << fmt_num(r.snr_db) << ',' << r.train_position << ','
          << r.test_position << ',' << acc(r) << ',' << r.correct << ',' << r.total << '\n';
      }
      break;
    case ExperimentKind::Complexity:
      o << "architecture,sf,param_count,inference_ms\n";
      for (const auto& r : report.rows) {
        o << r.architecture << ',' << r.sf << ',' << r.param_count << ',' << fmt("%.4f", r.inference_ms) << '\n';
      }
      break;
  }
  return o.str();
}

std::vector<std::pair<std::string, std::string>> report_svgs(const Report& report) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<int> sfs;
  for (const auto& r : report.rows) sfs.insert(r.sf);

  if (is_accuracy_vs_snr(report.kind)) {
    for (int sf : sfs) {
      std::map<std::string, Series> by_name;
      std::vector<std::string> order;
      for (const auto& r : report.rows) {
        if (r.sf != sf) continue;
        const std::string name = r.architecture + " / " + r.arm;
        if (!by_name.count(name)) order.push_back(name);
        by_name[name].name = name;
        by_name[name].points.emplace_back(r.snr_db, r.accuracy);
      }
      std::vector<Series> series;
      for (const auto& n : order) series.push_back(by_name[n]);
      out.emplace_back("accuracy_vs_snr_sf" + std::to_string(sf) + ".svg",
                       line_chart("Accuracy vs SNR, SF" + std::to_string(sf), "SNR (dB)", "accuracy", series,
                                  std::make_pair(0.0, 1.0)));
    }
  }
  if (report.kind == ExperimentKind::SnrSweep) {
    for (const auto& r : report.rows) {
      if (r.confusion.empty()) continue;
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < r.confusion.size(); ++i) labels.push_back("D" + std::to_string(i));
      std::vector<std::vector<double>> v;
      for (const auto& row : r.confusion) v.emplace_back(row.begin(), row.end());
      out.emplace_back("confusion_" + r.architecture + "_" + r.arm + "_sf" + std::to_string(r.sf) + "_snr" +
                           snr_tag(r.snr_db) + ".svg",
                       heatmap("Confusion " + r.architecture + " SF" + std::to_string(r.sf) + " at " +
                                   fmt("%g", r.snr_db) + " dB (rows: true)",
                               labels, labels, v, "%.0f"));
    }
  }
  if (report.kind == ExperimentKind::MultiPacketCurve) {
    std::vector<std::pair<std::string, int>> groups;
    for (const auto& r : report.rows) {
      const auto g = std::make_pair(r.architecture, r.sf);
      if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    for (const auto& [arch, sf] : groups) {
      std::vector<Series> series;
      for (const auto& r : report.rows) {
        if (r.architecture != arch || r.sf != sf) continue;
        const std::string name = fmt("%g dB", r.snr_db);
        auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == name; });
        if (it == series.end()) {
          series.push_back({name, {}});
          it = series.end() - 1;
        }
        it->points.emplace_back(static_cast<double>(r.n_pkt), r.accuracy);
      }
      out.emplace_back("accuracy_vs_npkt_" + arch + "_sf" + std::to_string(sf) + ".svg",
                       line_chart("Multi-packet accuracy, " + arch + " SF" + std::to_string(sf), "packets fused",
                                  "accuracy", series, std::make_pair(0.0, 1.0)));
    }
  }
  if (report.kind == ExperimentKind::PositionStudy) {
    std::vector<double> snrs;
    int n = 0;
    for (const auto& r : report.rows) {
      if (std::find(snrs.begin(), snrs.end(), r.snr_db) == snrs.end()) snrs.push_back(r.snr_db);
      n = std::max({n, r.train_position, r.test_position});
    }
    std::vector<std::string> train_labels, test_labels;
    for (int i = 1; i <= n; ++i) {
      train_labels.push_back("CNN " + std::to_string(i));
      test_labels.push_back("P" + std::to_string(i));
    }
    for (double snr : snrs) {
      std::vector<std::vector<double>> v(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
      for (const auto& r : report.rows) {
        if (r.snr_db == snr) {
          v[static_cast<std::size_t>(r.train_position - 1)][static_cast<std::size_t>(r.test_position - 1)] =
              r.accuracy;
        }
      }
      out.emplace_back("position_matrix_snr" + snr_tag(snr) + ".svg",
                       heatmap("Accuracy by training (rows) and test (columns) position at " + fmt("%g", snr) + " dB",
                               train_labels, test_labels, v, "%.2f"));
    }
  }
  if (report.kind == ExperimentKind::Complexity) {
    std::vector<Series> series;
    for (const auto& r : report.rows) {
      auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == r.architecture; });
      if (it == series.end()) {
        series.push_back({r.architecture, {}});
        it = series.end() - 1;
      }
      it->points.emplace_back(r.sf, r.inference_ms);
    }
    out.emplace_back("inference_time_vs_sf.svg",
                     line_chart("Single-input inference time", "spreading factor", "ms", series, std::nullopt));
  }
  return out;
}

std::vector<std::string> emit_report(const Report& report, const std::string& dir,
                                     const std::vector<std::string>& formats) {
  for (const auto& f : formats) {
    if (f != "csv" && f != "json" && f != "svg") {
      throw InvalidArgument("unknown report format '" + f + "' (expected csv, json or svg)");
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
  std::vector<std::string> written;
  auto write = [&](const std::string& name, const std::string& content) {
    const fs::path p = fs::path(dir) / name;
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw DataError("failed to write " + p.string());
    written.push_back(p.string());
  };
  const std::string stem(to_string(report.kind));
  for (const auto& f : formats) {
    if (f == "csv") write(stem + ".csv", report_csv(report));
    if (f == "json") write(stem + ".json", to_json(report).dump(1) + "\n");
    if (f == "svg") {
      for (const auto& [name, doc] : report_svgs(report)) write(name, doc);
    }
  }
  return written;
}

}  // namespace rffi
