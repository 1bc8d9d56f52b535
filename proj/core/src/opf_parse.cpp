#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "blockipm/opf.hpp"

namespace blockipm::opf {

namespace {

struct Table {
  std::vector<std::vector<double>> rows;
  std::vector<int> line_no;
};

// Scan for `mpc.<name> = [ ... ];` and split the body into numeric rows.
// Rows end at ';' or newline; '%' starts a comment.
bool extract_table(std::string_view text, const std::string& name, Table& out) {
  const std::string key = "mpc." + name;
  size_t pos = 0;
  while (true) {
    pos = text.find(key, pos);
    if (pos == std::string_view::npos) return false;
    // must be followed by '=' then '['
    size_t q = pos + key.size();
    while (q < text.size() && (text[q] == ' ' || text[q] == '\t')) ++q;
    if (q < text.size() && text[q] == '=') break;
    pos += key.size();
  }
  size_t open = text.find('[', pos);
  if (open == std::string_view::npos) throw ParseError("missing '[' after " + key, 0);
  size_t close = text.find(']', open);
  if (close == std::string_view::npos) throw ParseError("missing ']' for " + key, 0);

  int line = 1;
  for (size_t i = 0; i < open; ++i)
    if (text[i] == '\n') ++line;

  std::vector<double> row;
  auto flush_row = [&](int at_line) {
    if (!row.empty()) {
      out.rows.push_back(row);
      out.line_no.push_back(at_line);
      row.clear();
    }
  };
  size_t i = open + 1;
  while (i < close) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      flush_row(line - 1);
      ++i;
    } else if (c == ';') {
      flush_row(line);
      ++i;
    } else if (c == '%') {
      while (i < close && text[i] != '\n') ++i;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == ',') {
      ++i;
    } else {
      size_t j = i;
      while (j < close && text[j] != ' ' && text[j] != '\t' && text[j] != ';' &&
             text[j] != '\n' && text[j] != ',' && text[j] != '%' && text[j] != '\r')
        ++j;
      double v = 0;
      const auto res = std::from_chars(text.data() + i, text.data() + j, v);
      if (res.ec != std::errc() || res.ptr != text.data() + j)
        throw ParseError("malformed number '" + std::string(text.substr(i, j - i)) + "'", line);
      row.push_back(v);
      i = j;
    }
  }
  flush_row(line);
  return true;
}

double col(const std::vector<double>& row, size_t idx, int line, const char* table,
           size_t required) {
  if (row.size() < required)
    throw ParseError(std::string("row of mpc.") + table + " has " + std::to_string(row.size()) +
                         " columns, need " + std::to_string(required),
                     line);
  return row[idx];
}

}  // namespace

int CaseData::ref_bus_index() const {
  int ref = -1;
  for (size_t i = 0; i < bus.size(); ++i) {
    if (bus[i].type == kRef) {
      if (ref >= 0) throw ParseError("multiple reference buses", 0);
      ref = int(i);
    }
  }
  if (ref < 0) throw ParseError("no reference bus", 0);
  return ref;
}

CaseData parse_matpower(std::string_view text) {
  CaseData cs;

  // function mpc = <name>
  {
    size_t f = text.find("function");
    if (f != std::string_view::npos) {
      size_t eq = text.find('=', f);
      if (eq != std::string_view::npos) {
        size_t b = eq + 1;
        while (b < text.size() && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
        size_t e = b;
        while (e < text.size() && !std::isspace(static_cast<unsigned char>(text[e]))) ++e;
        cs.name = std::string(text.substr(b, e - b));
      }
    }
  }

  // mpc.baseMVA = <value>;
  {
    size_t p = text.find("mpc.baseMVA");
    if (p == std::string_view::npos) throw ParseError("missing mpc.baseMVA", 0);
    size_t eq = text.find('=', p);
    size_t sc = text.find(';', eq);
    if (eq == std::string_view::npos || sc == std::string_view::npos)
      throw ParseError("malformed mpc.baseMVA", 0);
    cs.baseMVA = std::stod(std::string(text.substr(eq + 1, sc - eq - 1)));
    if (!(cs.baseMVA > 0)) throw ParseError("baseMVA must be positive", 0);
  }

  Table bus, gen, branch, gencost;
  if (!extract_table(text, "bus", bus)) throw ParseError("missing table mpc.bus", 0);
  if (!extract_table(text, "gen", gen)) throw ParseError("missing table mpc.gen", 0);
  if (!extract_table(text, "branch", branch)) throw ParseError("missing table mpc.branch", 0);
  if (!extract_table(text, "gencost", gencost))
    throw ParseError("missing table mpc.gencost", 0);

  for (size_t r = 0; r < bus.rows.size(); ++r) {
    const auto& row = bus.rows[r];
    const int ln = bus.line_no[r];
    BusRow b;
    b.id = int(col(row, 0, ln, "bus", 13));
    b.type = int(row[1]);
    b.Pd = row[2];
    b.Qd = row[3];
    b.Gs = row[4];
    b.Bs = row[5];
    b.Vm = row[7];
    b.Va = row[8];
    b.Vmax = row[11];
    b.Vmin = row[12];
    cs.bus.push_back(b);
  }
  for (size_t r = 0; r < gen.rows.size(); ++r) {
    const auto& row = gen.rows[r];
    const int ln = gen.line_no[r];
    GenRow g;
    g.bus = int(col(row, 0, ln, "gen", 10));
    g.Pg = row[1];
    g.Qg = row[2];
    g.Qmax = row[3];
    g.Qmin = row[4];
    g.Vg = row[5];
    g.status = int(row[7]);
    g.Pmax = row[8];
    g.Pmin = row[9];
    cs.gen.push_back(g);
  }
  for (size_t r = 0; r < branch.rows.size(); ++r) {
    const auto& row = branch.rows[r];
    const int ln = branch.line_no[r];
    BranchRow br;
    br.from = int(col(row, 0, ln, "branch", 11));
    br.to = int(row[1]);
    br.r = row[2];
    br.x = row[3];
    br.b = row[4];
    br.rateA = row[5];
    br.tap = row[8];
    br.shift = row[9];
    br.status = int(row[10]);
    cs.branch.push_back(br);
  }
  for (size_t r = 0; r < gencost.rows.size(); ++r) {
    const auto& row = gencost.rows[r];
    const int ln = gencost.line_no[r];
    GenCostRow c;
    c.model = int(col(row, 0, ln, "gencost", 4));
    c.startup = row[1];
    c.shutdown = row[2];
    c.ncost = int(row[3]);
    if (c.model != 2) throw ParseError("only polynomial gencost (model 2) supported", ln);
    if (row.size() < size_t(4 + c.ncost))
      throw ParseError("gencost row shorter than ncost", ln);
    if (c.ncost > 3) throw ParseError("cost polynomials above degree 2 not supported", ln);
    for (int k = 0; k < c.ncost; ++k) c.coef.push_back(row[size_t(4 + k)]);
    cs.gencost.push_back(c);
  }

  // Structural checks: endpoints exist, exactly one reference bus.
  for (const auto& br : cs.branch) {
    bool from_ok = false, to_ok = false;
    for (const auto& b : cs.bus) {
      from_ok |= (b.id == br.from);
      to_ok |= (b.id == br.to);
    }
    if (!from_ok || !to_ok) throw ParseError("branch endpoint references unknown bus", 0);
  }
  cs.ref_bus_index();
  if (cs.gencost.size() != 0 && cs.gencost.size() != cs.gen.size())
    throw ParseError("gencost rows do not match gen rows", 0);
  return cs;
}

CaseData parse_matpower_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file: " + path, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_matpower(ss.str());
}

count_t reduced_matrix_bytes(count_t n_u, count_t element_size) {
  return n_u * n_u * element_size;
}

}  // namespace blockipm::opf
