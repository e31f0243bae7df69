#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ali/cfm.hpp"

// Figure output: 2D marginal scatter colored by time stamp, with rollout
// trajectories drawn on top. Pure string rendering with fixed-precision
// coordinates, so a given input always produces identical bytes.

namespace ali {

struct PlotStyle {
  double width = 900.0;
  double height = 620.0;
  double margin = 36.0;
  double point_radius = 2.2;
  double traj_width = 1.1;
  std::string background = "#ffffff";
  std::string traj_color = "#3a3a3a";
};

namespace detail {

// viridis anchors, linearly interpolated
inline std::string time_color(double t) {
  static constexpr double stops[5][3] = {{68, 1, 84},
                                         {59, 82, 139},
                                         {33, 145, 140},
                                         {94, 201, 98},
                                         {253, 231, 37}};
  const double u = std::min(1.0, std::max(0.0, t)) * 4.0;
  const std::size_t k = std::min<std::size_t>(3, static_cast<std::size_t>(u));
  const double w = u - static_cast<double>(k);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<unsigned>(stops[k][0] + w * (stops[k + 1][0] - stops[k][0]) + 0.5),
                static_cast<unsigned>(stops[k][1] + w * (stops[k + 1][1] - stops[k][1]) + 0.5),
                static_cast<unsigned>(stops[k][2] + w * (stops[k + 1][2] - stops[k][2]) + 0.5));
  return buf;
}

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct PlotFrame {
  double xmin, xmax, ymin, ymax;
  double sx, sy, ox, oy;  // pixel = o + s * coordinate, y flipped via negative sy

  PlotFrame(double x0, double x1, double y0, double y1, const PlotStyle& st)
      : xmin(x0), xmax(x1), ymin(y0), ymax(y1) {
    const double spanx = xmax > xmin ? xmax - xmin : 1.0;
    const double spany = ymax > ymin ? ymax - ymin : 1.0;
    sx = (st.width - 2.0 * st.margin) / spanx;
    sy = -(st.height - 2.0 * st.margin) / spany;
    ox = st.margin - sx * (xmax > xmin ? xmin : xmin - 0.5);
    oy = (st.height - st.margin) - sy * (ymax > ymin ? ymin : ymin - 0.5);
  }

  double X(double x) const { return ox + sx * x; }
  double Y(double y) const { return oy + sy * y; }
};

}  // namespace detail

inline std::string render_plot_svg(const MarginalDataset& ds, const TrajectorySet& traj,
                                   const PlotStyle& style = {}) {
  validate_dataset(ds, "render_plot_svg", false);
  if (ds.dim() != 2)
    throw std::invalid_argument("render_plot_svg: only 2D data can be plotted, got dimension " +
                                std::to_string(ds.dim()));
  const bool with_traj = traj.size() > 0;
  if (with_traj && traj.dim() != 2)
    throw std::invalid_argument("render_plot_svg: trajectory dimension " +
                                std::to_string(traj.dim()) + " is not 2");

  double xmin = ds.batches.front().points.at(0, 0), xmax = xmin;
  double ymin = ds.batches.front().points.at(0, 1), ymax = ymin;
  auto absorb = [&](double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  };
  for (const Batch& b : ds.batches)
    for (std::size_t i = 0; i < b.size(); ++i) absorb(b.points.at(i, 0), b.points.at(i, 1));
  if (with_traj)
    for (const Tensor& s : traj.states)
      for (std::size_t i = 0; i < s.rows(); ++i) absorb(s.at(i, 0), s.at(i, 1));
  const detail::PlotFrame fr(xmin, xmax, ymin, ymax, style);

  std::string out;
  out.reserve(1 << 16);
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::px(style.width) +
         "\" height=\"" + detail::px(style.height) + "\" viewBox=\"0 0 " +
         detail::px(style.width) + " " + detail::px(style.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"" + style.background + "\"/>\n";

  for (std::size_t k = 0; k < ds.size(); ++k) {
    const Batch& b = ds.batches[k];
    out += "<g fill=\"" + detail::time_color(ds.times[k]) + "\" fill-opacity=\"0.75\">\n";
    for (std::size_t i = 0; i < b.size(); ++i) {
      out += "<circle cx=\"" + detail::px(fr.X(b.points.at(i, 0))) + "\" cy=\"" +
             detail::px(fr.Y(b.points.at(i, 1))) + "\" r=\"" + detail::px(style.point_radius) +
             "\"/>\n";
    }
    out += "</g>\n";
  }

  if (with_traj) {
    out += "<g fill=\"none\" stroke=\"" + style.traj_color + "\" stroke-width=\"" +
           detail::px(style.traj_width) + "\" stroke-opacity=\"0.8\">\n";
    for (std::size_t i = 0; i < traj.size(); ++i) {
      out += "<polyline points=\"";
      for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (k) out += " ";
        out += detail::px(fr.X(traj.states[k].at(i, 0))) + "," +
               detail::px(fr.Y(traj.states[k].at(i, 1)));
      }
      out += "\"/>\n";
    }
    out += "</g>\n";
  }

  out += "</svg>\n";
  return out;
}

inline void write_plot_svg(const MarginalDataset& ds, const TrajectorySet& traj,
                           const std::string& path, const PlotStyle& style = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_plot_svg: cannot open " + path);
  const std::string svg = render_plot_svg(ds, traj, style);
  out.write(svg.data(), static_cast<std::streamsize>(svg.size()));
  if (!out) throw std::runtime_error("write_plot_svg: write failed for " + path);
}

}  // namespace ali
