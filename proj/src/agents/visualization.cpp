#include "common.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa::agents {

using namespace detail;
using nlohmann::json;

const std::vector<std::uint32_t>& chart_palette() {
  static const std::vector<std::uint32_t> p = {0x4E79A7, 0xF28E2B, 0xE15759, 0x76B7B2,
                                               0x59A14F, 0xEDC948, 0xB07AA1, 0xFF9DA7};
  return p;
}

std::string render_chart(const ChartData& data, ChartKind kind, int width, int height) {
  if (width < 64 || height < 64) throw Error(ErrorCode::ValidationError, "chart too small");
  std::vector<std::uint32_t> px(static_cast<std::size_t>(width) * height, kChartBackground);
  auto put = [&](int x, int y, std::uint32_t c) {
    if (x >= 0 && y >= 0 && x < width && y < height) px[static_cast<std::size_t>(y) * width + x] = c;
  };
  const auto& palette = chart_palette();
  const std::size_t n = data.values.size();

  if (kind == ChartKind::Bar) {
    const int left = 40;
    const int bottom = height - 30;
    const int top = 20;
    const int right = width - 20;
    for (int x = left; x <= right; ++x) put(x, bottom, kChartAxis);
    for (int y = top; y <= bottom; ++y) put(left, y, kChartAxis);
    const double max = n ? std::max(*std::max_element(data.values.begin(), data.values.end()), 0.0) : 0.0;
    if (n && max > 0) {
      const double slot = static_cast<double>(right - left - 1) / static_cast<double>(n);
      const int gap = slot >= 4 ? std::max(1, static_cast<int>(slot * 0.2)) : 0;
      for (std::size_t i = 0; i < n; ++i) {
        const int x0 = left + 1 + static_cast<int>(slot * i) + gap / 2;
        const int x1 = left + 1 + static_cast<int>(slot * (i + 1)) - (gap - gap / 2);
        const int h = static_cast<int>(std::lround(std::max(data.values[i], 0.0) / max * (bottom - top)));
        for (int x = x0; x < std::max(x1, x0 + 1); ++x) {
          for (int y = bottom - h; y < bottom; ++y) put(x, y, palette[i % palette.size()]);
        }
      }
    }
  } else {
    double total = 0;
    for (double v : data.values) total += std::max(v, 0.0);
    const double cx = width / 2.0;
    const double cy = height / 2.0;
    const double outer = std::min(width, height) / 2.0 - 10;
    const double inner = outer * 0.55;
    std::vector<double> ends;
    double acc = 0;
    for (double v : data.values) ends.push_back(acc += total > 0 ? std::max(v, 0.0) / total : 0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        const double r = std::hypot(dx, dy);
        if (r > outer || r < inner) continue;
        if (total <= 0) {
          put(x, y, kChartAxis);
          continue;
        }
        // Clockwise from twelve o'clock.
        double a = std::atan2(dx, -dy) / (2 * std::numbers::pi);
        if (a < 0) a += 1;
        auto it = std::upper_bound(ends.begin(), ends.end(), a);
        const std::size_t i = std::min<std::size_t>(it - ends.begin(), n - 1);
        put(x, y, palette[i % palette.size()]);
      }
    }
  }

  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + px.size() * 3);
  for (auto c : px) {
    out += static_cast<char>((c >> 16) & 0xFF);
    out += static_cast<char>((c >> 8) & 0xFF);
    out += static_cast<char>(c & 0xFF);
  }
  return out;
}

ChartData chart_data(const json& plottable, const std::string& column) {
  const auto r = result_from_json(plottable.at("result"));
  const auto measure = plottable.value("measure", std::string("value"));
  ChartData d;
  switch (r.shape) {
    case QueryResult::Shape::Scalar:
      d.labels = {measure};
      d.values = {r.scalar.value_or(0)};
      d.caption = measure;
      return d;
    case QueryResult::Shape::Grouped:
      for (const auto& [k, v] : r.groups) {
        d.labels.push_back(display(k));
        d.values.push_back(v);
      }
      d.caption = measure + " per " + plottable.value("group_by", std::string("group"));
      return d;
    case QueryResult::Shape::Rows: break;
  }
  if (r.rows.empty()) throw Error(ErrorCode::ValidationError, "the result has no rows");
  auto numeric = [&](std::size_t c) { return as_number(r.rows.front().values[c]).has_value(); };
  std::optional<std::size_t> col;
  for (std::size_t c = 0; c < r.columns.size(); ++c) {
    if (!column.empty() && r.columns[c] == column) col = c;
  }
  if (!col) {
    if (!column.empty()) throw Error(ErrorCode::ValidationError, "the result has no column " + column);
    for (std::size_t c = 0; c < r.columns.size() && !col; ++c) {
      if (numeric(c) && !r.columns[c].ends_with("_id")) col = c;
    }
  }
  if (!col) throw Error(ErrorCode::ValidationError, "the result has no numeric column");
  const auto& name = r.columns[*col];
  d.caption = "records per " + name;
  if (!numeric(*col)) {
    std::map<std::string, double> counts;
    for (const auto& row : r.rows) counts[display(row.values[*col])] += 1;
    for (const auto& [k, v] : counts) {
      d.labels.push_back(k);
      d.values.push_back(v);
    }
    return d;
  }
  std::vector<double> xs;
  for (const auto& row : r.rows) xs.push_back(as_number(row.values[*col]).value_or(0));
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const std::size_t distinct = std::set<double>(xs.begin(), xs.end()).size();
  const std::size_t bins = std::min<std::size_t>(8, distinct);
  const double width = bins > 1 ? (*hi - *lo) / static_cast<double>(bins) : 1;
  d.values.assign(bins, 0);
  for (std::size_t b = 0; b < bins; ++b) {
    d.labels.push_back(plain_number(*lo + width * b) + "-" + plain_number(bins > 1 ? *lo + width * (b + 1) : *hi));
  }
  for (double x : xs) {
    auto b = bins > 1 ? static_cast<std::size_t>((x - *lo) / width) : 0;
    d.values[std::min(b, bins - 1)] += 1;
  }
  return d;
}

std::shared_ptr<AgentPipeline> make_visualization_agent(const Services& s) {
  static const auto patterns = compile_all({
      {"plot", "plot|chart|draw|graph|visualize|visualise bar|doughnut|donut|pie? chart|graph|plot?"},
  });

  AgentManifest m;
  m.name = "visualization";
  m.description = "Plots the most recent query result";
  m.allowed_personas = everyone();

  auto nlu = understand("plot_nlu", {"kind", "column"}, [](SkillFrame& f) {
    auto hit = intent::match(f.utterance.text, patterns);
    if (hit.intent.empty()) return;
    f.intent = hit.intent;
    f.confidence = hit.coverage;
    const auto ws = words(f.utterance.text);
    const bool ring = std::any_of(ws.begin(), ws.end(), [](const std::string& w) {
      return w == "doughnut" || w == "donut" || w == "pie";
    });
    f.set("kind", ring ? "doughnut" : "bar");
    for (std::size_t i = 0; i < ws.size(); ++i) {
      if (ws[i] != "per" && ws[i] != "by") continue;
      std::string col;
      for (std::size_t j = i + 1; j < ws.size(); ++j) col += (col.empty() ? "" : "_") + ws[j];
      if (!col.empty()) f.set("column", col);
      break;
    }
  });

  auto plotter = act("plotter", {"kind", "column"}, {"chart", "problem"}, [](SkillFrame& f) {
    const auto* entry = f.ctx_in.find(std::string(kPlottableKey));
    if (!entry) return;
    const auto column = f.get("column").is_string() ? f.get("column").get<std::string>() : std::string();
    try {
      auto d = chart_data(entry->value, column);
      f.set("chart", {{"labels", d.labels}, {"values", d.values}, {"caption", d.caption}});
    } catch (const Error& e) {
      f.set("problem", std::string("I cannot plot that: ") + e.what() + ".");
    }
  });

  auto reply = respond("plot_reply", {"kind", "chart", "problem"}, [](SkillFrame& f) {
    if (f.has("problem")) {
      f.text = f.get("problem").get<std::string>();
      return;
    }
    if (!f.has("chart")) {
      f.text = "There is no data to be plotted.";
      return;
    }
    const auto& c = f.get("chart");
    ChartData d{c.at("labels").get<std::vector<std::string>>(), c.at("values").get<std::vector<double>>(),
                c.at("caption").get<std::string>()};
    const auto kind = f.get("kind").get<std::string>();
    f.text = "Here is the " + kind + " chart of " + d.caption;
    f.attachment = Attachment{Attachment::Kind::Image,
                              render_chart(d, kind == "doughnut" ? ChartKind::Doughnut : ChartKind::Bar),
                              {},
                              "image/x-portable-pixmap",
                              d.caption};
  });

  return compose_agent(std::move(m), std::move(nlu), {std::move(plotter)}, std::move(reply), {{"plotter", {}}},
                       s.ledger);
}

}  // namespace bpa::agents
