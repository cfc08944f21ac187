#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace headprobe::pipeline::svg {

std::string escape(const std::string& s);
std::string fmt(double v, int decimals = 2);

// Minimal SVG document builder. Elements are appended in call order.
class Document {
 public:
  Document(double width, double height);

  void root_attr(const std::string& key, const std::string& value);
  void open_group(const std::map<std::string, std::string>& attrs = {});
  void close_group();

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::map<std::string, std::string>& attrs = {});
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0,
            const std::string& dash = "");
  void polyline(const std::vector<std::pair<double, double>>& points, const std::string& stroke, double width = 1.5,
                const std::string& dash = "");
  void circle(double cx, double cy, double r, const std::string& fill);
  // anchor: start, middle or end.
  void text(double x, double y, const std::string& s, double size = 11, const std::string& anchor = "start",
            const std::map<std::string, std::string>& attrs = {});

  std::string str() const;

 private:
  double width_, height_;
  std::map<std::string, std::string> root_attrs_;
  std::string body_;
  int depth_ = 0;
};

struct Series {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;  // NaN breaks the line
  std::string color;
  std::string dash;
};

struct Box {
  double x, y, w, h;
};

// Line chart with axes, ticks and a legend to the right of the plot area.
// An empty or all-NaN panel gets a "no data" annotation.
void line_panel(Document& doc, const Box& box, const std::string& title, const std::string& xlabel,
                const std::string& ylabel, const std::vector<Series>& series);

struct Bar {
  std::string label;
  double value;
};

// Horizontal bars around a zero line, in the given order.
void bar_panel(Document& doc, const Box& box, const std::string& title, const std::string& xlabel,
               const std::vector<Bar>& bars);

void no_data(Document& doc, const Box& box, const std::string& title);

const std::string& palette(std::size_t i);

// Diverging blue-white-red map of t in [-1, 1].
std::string diverging(double t);

// Tick positions covering [lo, hi] with a 1-2-5 step.
std::vector<double> nice_ticks(double lo, double hi, int target = 5);

}  // namespace headprobe::pipeline::svg
