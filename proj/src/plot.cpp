// Standalone SVG line charts built from run CSVs.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "segilm/error.hpp"
#include "segilm/harness.hpp"

namespace segilm::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kPanelWidth = 300.0;
constexpr double kPanelHeight = 220.0;
constexpr double kMargin = 40.0;

struct Line {
  std::vector<double> xs;
  std::vector<double> ys;
  std::string colour;
  double width = 1.0;
  double opacity = 1.0;
};

struct Panel {
  std::string title;
  std::string x_label;
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  std::vector<Line> lines;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(5);
  s << v;
  return s.str();
}

void draw_panel(std::ostream& out, const Panel& p, double ox, double oy) {
  const double w = kPanelWidth - 2 * kMargin;
  const double h = kPanelHeight - 2 * kMargin;
  auto sx = [&](double x) {
    return ox + kMargin + (p.x_max > p.x_min ? (x - p.x_min) / (p.x_max - p.x_min) : 0.5) * w;
  };
  auto sy = [&](double y) {
    return oy + kMargin + h - (p.y_max > p.y_min ? (y - p.y_min) / (p.y_max - p.y_min) : 0.5) * h;
  };
  out << "<rect x=\"" << num(ox + kMargin) << "\" y=\"" << num(oy + kMargin) << "\" width=\""
      << num(w) << "\" height=\"" << num(h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << num(ox + kPanelWidth / 2) << "\" y=\"" << num(oy + kMargin - 10)
      << "\" text-anchor=\"middle\" font-size=\"13\">" << p.title << "</text>\n";
  out << "<text x=\"" << num(ox + kPanelWidth / 2) << "\" y=\"" << num(oy + kPanelHeight - 8)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << p.x_label << "</text>\n";
  for (double t : {p.y_min, (p.y_min + p.y_max) / 2, p.y_max}) {
    out << "<text x=\"" << num(ox + kMargin - 4) << "\" y=\"" << num(sy(t) + 4)
        << "\" text-anchor=\"end\" font-size=\"10\">" << num(t) << "</text>\n";
  }
  for (double t : {p.x_min, p.x_max}) {
    out << "<text x=\"" << num(sx(t)) << "\" y=\"" << num(oy + kMargin + h + 14)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << num(t) << "</text>\n";
  }
  for (const auto& line : p.lines) {
    out << "<polyline fill=\"none\" stroke=\"" << line.colour << "\" stroke-width=\""
        << num(line.width) << "\" stroke-opacity=\"" << num(line.opacity) << "\" points=\"";
    for (std::size_t i = 0; i < line.xs.size(); ++i) {
      if (std::isfinite(line.ys[i])) {
        out << num(sx(line.xs[i])) << ',' << num(sy(std::clamp(line.ys[i], p.y_min, p.y_max)))
            << ' ';
      }
    }
    out << "\"/>\n";
  }
}

void write_svg(const fs::path& path, const std::vector<Panel>& panels, std::size_t columns) {
  const std::size_t rows = (panels.size() + columns - 1) / columns;
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kPanelWidth * columns)
      << "\" height=\"" << num(kPanelHeight * rows) << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    draw_panel(out, panels[i], kPanelWidth * static_cast<double>(i % columns),
               kPanelHeight * static_cast<double>(i / columns));
  }
  out << "</svg>\n";
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

// Blue for early generations through red for late ones.
std::string warm_colour(double t) {
  const int r = static_cast<int>(std::lround(40 + 215 * t));
  const int b = static_cast<int>(std::lround(230 - 200 * t));
  std::ostringstream s;
  s << "rgb(" << r << ",60," << b << ")";
  return s.str();
}

}  // namespace

void plot_xcs(const std::vector<fs::path>& generation_csvs, const fs::path& svg_path) {
  const char* names[3] = {"x", "c", "s"};
  const char* titles[3] = {"expressivity x", "compositionality c", "stability s"};
  const char* colours[3] = {"#1f77b4", "#d62728", "#2ca02c"};
  std::vector<Panel> panels(3);
  std::vector<std::vector<double>> sums(3);
  std::vector<std::size_t> counts;
  std::vector<double> generations;
  for (const auto& csv : generation_csvs) {
    const auto table = read_csv(csv);
    if (table.rows.empty()) {
      continue;
    }
    const auto gens = table.numbers("generation");
    if (gens.size() > generations.size()) {
      generations = gens;
    }
    counts.resize(std::max(counts.size(), gens.size()), 0);
    for (std::size_t i = 0; i < gens.size(); ++i) {
      ++counts[i];
    }
    for (int k = 0; k < 3; ++k) {
      const auto ys = table.numbers(names[k]);
      sums[k].resize(std::max(sums[k].size(), ys.size()), 0.0);
      for (std::size_t i = 0; i < ys.size(); ++i) {
        sums[k][i] += ys[i];
      }
      panels[k].lines.push_back({gens, ys, colours[k], 0.8, 0.35});
    }
  }
  for (int k = 0; k < 3; ++k) {
    auto& p = panels[k];
    p.title = titles[k];
    p.x_label = "generation";
    p.x_min = generations.empty() ? 0.0 : generations.front();
    p.x_max = generations.empty() ? 1.0 : generations.back();
    p.y_min = k == 1 ? -0.1 : 0.0;
    p.y_max = 1.0;
    std::vector<double> mean(sums[k].size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
      mean[i] = sums[k][i] / static_cast<double>(counts[i]);
    }
    p.lines.push_back({generations, mean, colours[k], 2.5, 1.0});
  }
  write_svg(svg_path, panels, 3);
}

void plot_losses(const fs::path& loss_csv, const fs::path& svg_path) {
  const auto table = read_csv(loss_csv);
  const auto gens = table.numbers("generation");
  const auto epochs = table.numbers("epoch");
  const char* names[4] = {"encoder", "decoder", "inner", "outer"};
  const double first_gen = gens.empty() ? 1.0 : gens.front();
  const double last_gen = gens.empty() ? 1.0 : gens.back();
  std::vector<Panel> panels(4);
  for (int k = 0; k < 4; ++k) {
    const auto values = table.numbers(names[k]);
    auto& p = panels[k];
    p.title = std::string(names[k]) + " loss";
    p.x_label = "epoch";
    p.x_min = 1.0;
    p.x_max = epochs.empty() ? 1.0 : *std::max_element(epochs.begin(), epochs.end());
    p.y_min = 0.0;
    p.y_max = 0.0;
    for (double v : values) {
      if (std::isfinite(v)) {
        p.y_max = std::max(p.y_max, v);
      }
    }
    if (p.y_max == 0.0) {
      p.y_max = 1.0;
    }
    for (std::size_t i = 0; i < values.size();) {
      Line line;
      const double g = gens[i];
      for (; i < values.size() && gens[i] == g; ++i) {
        line.xs.push_back(epochs[i]);
        line.ys.push_back(values[i]);
      }
      line.colour = warm_colour(last_gen > first_gen ? (g - first_gen) / (last_gen - first_gen) : 0.0);
      line.width = 1.2;
      p.lines.push_back(std::move(line));
    }
  }
  write_svg(svg_path, panels, 2);
}

void plot_run(const fs::path& run_dir) {
  std::vector<fs::path> csvs;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("inst_") && name.ends_with(".csv")) {
      csvs.push_back(entry.path());
    }
  }
  if (csvs.empty()) {
    throw IoError("no generation CSVs in " + run_dir.string());
  }
  std::sort(csvs.begin(), csvs.end());
  plot_xcs(csvs, run_dir / "xcs.svg");
  if (fs::exists(run_dir / "losses.csv")) {
    plot_losses(run_dir / "losses.csv", run_dir / "losses.svg");
  }
}

}  // namespace segilm::harness
