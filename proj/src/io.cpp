#include "curvestream/io.hpp"

#include "curvestream/errors.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace curvestream {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, std::size_t line, const std::string& col)
{
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || s.empty()) {
        throw ValidationError("line " + std::to_string(line) + ": column '" + col + "' is not a number: '" + s + "'");
    }
    return v;
}

int parse_category(const std::string& s, std::size_t line)
{
    if (s == "A" || s == "a" || s == "1") return 1;
    if (s == "B" || s == "b" || s == "0") return 0;
    throw ValidationError("line " + std::to_string(line) + ": category must be A/B or 1/0, got '" + s + "'");
}

struct CsvTable {
    std::map<std::string, std::size_t> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    std::size_t require(const std::string& name) const
    {
        const auto it = columns.find(name);
        if (it == columns.end()) throw ValidationError("CSV schema: missing required column '" + name + "'");
        return it->second;
    }
};

CsvTable read_csv(std::istream& in)
{
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!header && lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        auto fields = split_line(line);
        if (!header) {
            for (std::size_t k = 0; k < fields.size(); ++k) {
                if (!t.columns.emplace(fields[k], k).second) {
                    throw ValidationError("CSV schema: duplicate column '" + fields[k] + "'");
                }
            }
            header = true;
            continue;
        }
        if (fields.size() != t.columns.size()) {
            throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                                  " fields, found " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(lineno);
    }
    if (!header) throw ValidationError("CSV schema: missing header row");
    if (t.rows.empty()) throw ValidationError("CSV has no data rows");
    return t;
}

// Shortest text that reads back to the same double.
struct FullPrecision {
    explicit FullPrecision(std::ostream& os) : os(os), old(os.precision(17)) {}
    ~FullPrecision() { os.precision(old); }
    std::ostream& os;
    std::streamsize old;
};

std::ifstream open_in(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "' for reading");
    return in;
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    out.precision(17);
    return out;
}

VectorXd to_vector(const std::vector<double>& v)
{
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vec_from(const json& j) { return to_vector(j.get<std::vector<double>>()); }

json mat_json(const MatrixXd& M)
{
    return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::vector<double>(M.data(), M.data() + M.size())}};
}

MatrixXd mat_from(const json& j)
{
    if (j.is_array()) {
        const auto rows = j.get<std::vector<std::vector<double>>>();
        const auto r = static_cast<Eigen::Index>(rows.size());
        const auto c = r ? static_cast<Eigen::Index>(rows.front().size()) : 0;
        MatrixXd M(r, c);
        for (Eigen::Index i = 0; i < r; ++i) {
            if (static_cast<Eigen::Index>(rows[i].size()) != c) throw ValidationError("ragged matrix in JSON");
            for (Eigen::Index k = 0; k < c; ++k) M(i, k) = rows[i][k];
        }
        return M;
    }
    const auto r = j.at("rows").get<Eigen::Index>();
    const auto c = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != r * c) throw ValidationError("matrix data length mismatch in JSON");
    return Eigen::Map<const MatrixXd>(data.data(), r, c);
}

json basis_json(const SplineBasis& b)
{
    return {{"interior_knots", vec_json(b.interior_knots)}, {"a", b.a}, {"b", b.b}};
}

SplineBasis basis_from(const json& j)
{
    return make_spline_basis(vec_from(j.at("interior_knots")), j.at("a").get<double>(), j.at("b").get<double>());
}

json model_json(const TwoLevelCurveModel& m)
{
    return {{"layout", m.layout == Layout::Contrast ? "contrast" : "standard"},
            {"gbl_basis", basis_json(m.gbl_basis)},
            {"grp_basis", basis_json(m.grp_basis)},
            {"labels", m.labels}};
}

TwoLevelCurveModel two_model_from(const json& j)
{
    TwoLevelCurveModel m;
    const auto layout = j.at("layout").get<std::string>();
    if (layout == "contrast") m.layout = Layout::Contrast;
    else if (layout == "standard") m.layout = Layout::Standard;
    else throw ValidationError("unknown layout '" + layout + "' in artifact");
    m.gbl_basis = basis_from(j.at("gbl_basis"));
    m.grp_basis = basis_from(j.at("grp_basis"));
    m.labels = j.at("labels").get<std::vector<std::string>>();
    return m;
}

json model_json(const ThreeLevelCurveModel& m)
{
    return {{"gbl_basis", basis_json(m.gbl_basis)},
            {"g_basis", basis_json(m.g_basis)},
            {"h_basis", basis_json(m.h_basis)},
            {"labels", m.labels},
            {"sublabels", m.sublabels}};
}

ThreeLevelCurveModel three_model_from(const json& j)
{
    ThreeLevelCurveModel m;
    m.gbl_basis = basis_from(j.at("gbl_basis"));
    m.g_basis = basis_from(j.at("g_basis"));
    m.h_basis = basis_from(j.at("h_basis"));
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.sublabels = j.at("sublabels").get<std::vector<std::vector<std::string>>>();
    return m;
}

json coef_json(const TwoLevelSolution& s)
{
    json groups = json::array();
    for (const auto& g : s.groups) groups.push_back({{"x2", vec_json(g.x2)}, {"A22", mat_json(g.A22)}, {"A12", mat_json(g.A12)}});
    return {{"x1", vec_json(s.x1)}, {"A11", mat_json(s.A11)}, {"logdet_BtB", s.logdet_BtB}, {"groups", groups}};
}

TwoLevelSolution two_coef_from(const json& j)
{
    TwoLevelSolution s;
    s.x1 = vec_from(j.at("x1"));
    s.A11 = mat_from(j.at("A11"));
    s.logdet_BtB = j.at("logdet_BtB").get<double>();
    for (const auto& g : j.at("groups")) {
        s.groups.push_back({vec_from(g.at("x2")), mat_from(g.at("A22")), mat_from(g.at("A12"))});
    }
    return s;
}

json coef_json(const ThreeLevelSolution& s)
{
    json groups = json::array();
    for (const auto& g : s.groups) {
        json cells = json::array();
        for (const auto& c : g.cells) {
            cells.push_back({{"x2", vec_json(c.x2)},
                             {"A22", mat_json(c.A22)},
                             {"A12", mat_json(c.A12)},
                             {"A12_group", mat_json(c.A12_group)}});
        }
        groups.push_back({{"x2", vec_json(g.x2)}, {"A22", mat_json(g.A22)}, {"A12", mat_json(g.A12)}, {"cells", cells}});
    }
    return {{"x1", vec_json(s.x1)}, {"A11", mat_json(s.A11)}, {"logdet_BtB", s.logdet_BtB}, {"groups", groups}};
}

ThreeLevelSolution three_coef_from(const json& j)
{
    ThreeLevelSolution s;
    s.x1 = vec_from(j.at("x1"));
    s.A11 = mat_from(j.at("A11"));
    s.logdet_BtB = j.at("logdet_BtB").get<double>();
    for (const auto& g : j.at("groups")) {
        ThreeLevelGroupSolution gs;
        gs.x2 = vec_from(g.at("x2"));
        gs.A22 = mat_from(g.at("A22"));
        gs.A12 = mat_from(g.at("A12"));
        for (const auto& c : g.at("cells")) {
            gs.cells.push_back(
                {vec_from(c.at("x2")), mat_from(c.at("A22")), mat_from(c.at("A12")), mat_from(c.at("A12_group"))});
        }
        s.groups.push_back(std::move(gs));
    }
    return s;
}

json ics_json(const InverseChiSq& d) { return {{"xi", d.xi}, {"lambda", d.lambda}}; }
InverseChiSq ics_from(const json& j) { return {j.at("xi").get<double>(), j.at("lambda").get<double>()}; }

json igw_json(const InverseGWishart& d)
{
    return {{"graph", d.graph == Graph::Full ? "full" : "diag"}, {"xi", d.xi}, {"Lambda", mat_json(d.Lambda)}};
}

InverseGWishart igw_from(const json& j)
{
    const auto g = j.at("graph").get<std::string>();
    if (g != "full" && g != "diag") throw ValidationError("unknown graph '" + g + "' in artifact");
    return {g == "full" ? Graph::Full : Graph::Diag, j.at("xi").get<double>(), mat_from(j.at("Lambda"))};
}

json scale_json(const ScaleFactor& f)
{
    return {{"sigma_sq", ics_json(f.sigma_sq)},
            {"a", ics_json(f.a)},
            {"mu_recip_sigma_sq", f.mu_recip_sigma_sq},
            {"mu_recip_a", f.mu_recip_a}};
}

ScaleFactor scale_from(const json& j)
{
    return {ics_from(j.at("sigma_sq")), ics_from(j.at("a")), j.at("mu_recip_sigma_sq").get<double>(),
            j.at("mu_recip_a").get<double>()};
}

json cov_json(const CovFactor& f)
{
    return {{"Sigma", igw_json(f.Sigma)},
            {"A", igw_json(f.A)},
            {"M_Sigma_inv", mat_json(f.M_Sigma_inv)},
            {"M_A_inv", mat_json(f.M_A_inv)}};
}

CovFactor cov_from(const json& j)
{
    return {igw_from(j.at("Sigma")), igw_from(j.at("A")), mat_from(j.at("M_Sigma_inv")), mat_from(j.at("M_A_inv"))};
}

json hyper_json(const HyperparametersTwoLevel& h)
{
    return {{"mu_beta", vec_json(h.mu_beta)}, {"Sigma_beta", mat_json(h.Sigma_beta)},
            {"nu_eps", h.nu_eps},             {"s_eps", h.s_eps},
            {"nu_gbl", h.nu_gbl},             {"s_gbl", h.s_gbl},
            {"nu_grp", h.nu_grp},             {"s_grp", h.s_grp},
            {"nu_Sigma", h.nu_Sigma},         {"s_Sigma", vec_json(h.s_Sigma)}};
}

json hyper_json(const HyperparametersThreeLevel& h)
{
    return {{"mu_beta", vec_json(h.mu_beta)},  {"Sigma_beta", mat_json(h.Sigma_beta)},
            {"nu_eps", h.nu_eps},              {"s_eps", h.s_eps},
            {"nu_gbl", h.nu_gbl},              {"s_gbl", h.s_gbl},
            {"nu_grp_g", h.nu_grp_g},          {"s_grp_g", h.s_grp_g},
            {"nu_grp_h", h.nu_grp_h},          {"s_grp_h", h.s_grp_h},
            {"nu_Sigma_g", h.nu_Sigma_g},      {"s_Sigma_g", vec_json(h.s_Sigma_g)},
            {"nu_Sigma_h", h.nu_Sigma_h},      {"s_Sigma_h", vec_json(h.s_Sigma_h)}};
}

template <class T>
void maybe(const json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_vec(const json& j, const char* key, VectorXd& out)
{
    if (j.contains(key)) out = vec_from(j.at(key));
}

void maybe_mat(const json& j, const char* key, MatrixXd& out)
{
    if (j.contains(key)) out = mat_from(j.at(key));
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what)
{
    if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* n : known) ok = ok || k == n;
        if (!ok) throw ValidationError(std::string(what) + ": unknown key '" + k + "'");
    }
}

template <class F>
auto guarded(F&& f)
{
    try {
        return f();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
}

json stats_json(const TwoLevelCoefStats& s)
{
    return {{"sq_residual", s.sq_residual},
            {"lin_outer", mat_json(s.lin_outer)},
            {"grp_sq", s.grp_sq},
            {"gbl_sq", vec_json(s.gbl_sq)}};
}

json stats_json(const ThreeLevelCoefStats& s)
{
    return {{"sq_residual", s.sq_residual}, {"lin_g_outer", mat_json(s.lin_g_outer)},
            {"lin_h_outer", mat_json(s.lin_h_outer)}, {"grp_g_sq", s.grp_g_sq},
            {"grp_h_sq", s.grp_h_sq}, {"gbl_sq", s.gbl_sq}};
}

json fit_json(const MfvbFitTwoLevel& f)
{
    json gbl = json::array();
    for (const auto& g : f.state.gbl) gbl.push_back(scale_json(g));
    const auto& s = f.state;
    return {{"model", model_json(f.model)},
            {"hyper", hyper_json(f.hyper)},
            {"state",
             {{"coef", coef_json(s.coef)},
              {"stats", stats_json(s.stats)},
              {"eps", scale_json(s.eps)},
              {"gbl", gbl},
              {"grp", scale_json(s.grp)},
              {"Sigma", cov_json(s.Sigma)},
              {"elbo_const", s.elbo_const}}},
            {"convergence",
             {{"iterations", f.iterations}, {"converged", f.converged}, {"elbo_trace", f.elbo_trace}, {"seconds", f.seconds}}}};
}

MfvbFitTwoLevel mfvb_two_from(const json& j)
{
    MfvbFitTwoLevel f;
    f.model = two_model_from(j.at("model"));
    const int d = f.model.layout == Layout::Contrast ? 4 : 2;
    f.hyper = hyper_two_level_from_json(j.at("hyper"), d);
    const auto& s = j.at("state");
    f.state.coef = two_coef_from(s.at("coef"));
    const auto& st = s.at("stats");
    f.state.stats.sq_residual = st.at("sq_residual").get<double>();
    f.state.stats.lin_outer = mat_from(st.at("lin_outer"));
    f.state.stats.grp_sq = st.at("grp_sq").get<double>();
    f.state.stats.gbl_sq = vec_from(st.at("gbl_sq"));
    f.state.eps = scale_from(s.at("eps"));
    for (const auto& g : s.at("gbl")) f.state.gbl.push_back(scale_from(g));
    f.state.grp = scale_from(s.at("grp"));
    f.state.Sigma = cov_from(s.at("Sigma"));
    f.state.elbo_const = s.at("elbo_const").get<double>();
    const auto& c = j.at("convergence");
    f.iterations = c.at("iterations").get<int>();
    f.converged = c.at("converged").get<bool>();
    f.elbo_trace = c.at("elbo_trace").get<std::vector<double>>();
    f.seconds = c.at("seconds").get<double>();
    return f;
}

json fit_json(const MfvbFitThreeLevel& f)
{
    const auto& s = f.state;
    return {{"model", model_json(f.model)},
            {"hyper", hyper_json(f.hyper)},
            {"state",
             {{"coef", coef_json(s.coef)},
              {"stats", stats_json(s.stats)},
              {"eps", scale_json(s.eps)},
              {"gbl", scale_json(s.gbl)},
              {"grp_g", scale_json(s.grp_g)},
              {"grp_h", scale_json(s.grp_h)},
              {"Sigma_g", cov_json(s.Sigma_g)},
              {"Sigma_h", cov_json(s.Sigma_h)}}},
            {"convergence",
             {{"iterations", f.iterations},
              {"converged", f.converged},
              {"change_trace", f.change_trace},
              {"seconds", f.seconds}}}};
}

MfvbFitThreeLevel mfvb_three_from(const json& j)
{
    MfvbFitThreeLevel f;
    f.model = three_model_from(j.at("model"));
    f.hyper = hyper_three_level_from_json(j.at("hyper"));
    const auto& s = j.at("state");
    f.state.coef = three_coef_from(s.at("coef"));
    const auto& st = s.at("stats");
    f.state.stats.sq_residual = st.at("sq_residual").get<double>();
    f.state.stats.lin_g_outer = mat_from(st.at("lin_g_outer"));
    f.state.stats.lin_h_outer = mat_from(st.at("lin_h_outer"));
    f.state.stats.grp_g_sq = st.at("grp_g_sq").get<double>();
    f.state.stats.grp_h_sq = st.at("grp_h_sq").get<double>();
    f.state.stats.gbl_sq = st.at("gbl_sq").get<double>();
    f.state.eps = scale_from(s.at("eps"));
    f.state.gbl = scale_from(s.at("gbl"));
    f.state.grp_g = scale_from(s.at("grp_g"));
    f.state.grp_h = scale_from(s.at("grp_h"));
    f.state.Sigma_g = cov_from(s.at("Sigma_g"));
    f.state.Sigma_h = cov_from(s.at("Sigma_h"));
    const auto& c = j.at("convergence");
    f.iterations = c.at("iterations").get<int>();
    f.converged = c.at("converged").get<bool>();
    f.change_trace = c.at("change_trace").get<std::vector<double>>();
    f.seconds = c.at("seconds").get<double>();
    return f;
}

json var_json(const VarianceParamsTwoLevel& v)
{
    return {{"sigma_eps_sq", v.sigma_eps_sq},
            {"sigma_gbl_sq", v.sigma_gbl_sq},
            {"sigma_grp_sq", v.sigma_grp_sq},
            {"Sigma", mat_json(v.Sigma)}};
}

json var_json(const VarianceParamsThreeLevel& v)
{
    return {{"sigma_eps_sq", v.sigma_eps_sq},     {"sigma_gbl_sq", v.sigma_gbl_sq},
            {"sigma_grp_g_sq", v.sigma_grp_g_sq}, {"sigma_grp_h_sq", v.sigma_grp_h_sq},
            {"Sigma_g", mat_json(v.Sigma_g)},     {"Sigma_h", mat_json(v.Sigma_h)}};
}

int parse_major(const std::string& version)
{
    const auto dot = version.find('.');
    const std::string major = version.substr(0, dot);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(major.data(), major.data() + major.size(), v);
    if (ec != std::errc() || ptr != major.data() + major.size() || major.empty()) {
        throw ValidationError("artifact format version '" + version + "' is not of the form MAJOR.MINOR");
    }
    return v;
}

} // namespace

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

TwoLevelDataset read_two_level_csv(std::istream& in)
{
    const CsvTable t = read_csv(in);
    const std::size_t cg = t.require("group"), cx = t.require("x"), cy = t.require("y");
    const auto cat_it = t.columns.find("category");
    const bool has_cat = cat_it != t.columns.end();
    TwoLevelDataset data;
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<double>> xs, ys;
    std::vector<std::vector<int>> cats;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::size_t line = t.line_numbers[r];
        if (row[cg].empty()) throw ValidationError("line " + std::to_string(line) + ": empty group label");
        auto [it, fresh] = index.emplace(row[cg], data.labels.size());
        if (fresh) {
            data.labels.push_back(row[cg]);
            xs.emplace_back();
            ys.emplace_back();
            cats.emplace_back();
        }
        xs[it->second].push_back(parse_double(row[cx], line, "x"));
        ys[it->second].push_back(parse_double(row[cy], line, "y"));
        if (has_cat) cats[it->second].push_back(parse_category(row[cat_it->second], line));
    }
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        data.groups.push_back({to_vector(xs[i]), to_vector(ys[i]), cats[i]});
    }
    validate(data);
    return data;
}

TwoLevelDataset read_two_level_csv(const std::string& path)
{
    auto in = open_in(path);
    return read_two_level_csv(in);
}

void write_two_level_csv(std::ostream& out, const TwoLevelDataset& data)
{
    validate(data);
    const FullPrecision fp(out);
    bool has_cat = false;
    for (const auto& g : data.groups) has_cat = has_cat || !g.category.empty();
    out << (has_cat ? "group,x,y,category\n" : "group,x,y\n");
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        const auto& g = data.groups[i];
        if (has_cat && g.category.empty()) throw ValidationError("group '" + data.labels[i] + "' has no categories");
        for (Eigen::Index k = 0; k < g.x.size(); ++k) {
            out << data.labels[i] << ',' << g.x[k] << ',' << g.y[k];
            if (has_cat) out << ',' << (g.category[static_cast<std::size_t>(k)] == 1 ? 'A' : 'B');
            out << '\n';
        }
    }
}

void write_two_level_csv(const std::string& path, const TwoLevelDataset& data)
{
    auto out = open_out(path);
    write_two_level_csv(out, data);
}

ThreeLevelDataset read_three_level_csv(std::istream& in)
{
    const CsvTable t = read_csv(in);
    const std::size_t cg = t.require("group"), cs = t.require("subgroup"), cx = t.require("x"), cy = t.require("y");
    ThreeLevelDataset data;
    std::map<std::string, std::size_t> gindex;
    std::vector<std::map<std::string, std::size_t>> sindex;
    std::vector<std::vector<std::vector<double>>> xs, ys;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::size_t line = t.line_numbers[r];
        if (row[cg].empty() || row[cs].empty()) {
            throw ValidationError("line " + std::to_string(line) + ": empty group or subgroup label");
        }
        auto [git, gfresh] = gindex.emplace(row[cg], data.labels.size());
        if (gfresh) {
            data.labels.push_back(row[cg]);
            data.groups.emplace_back();
            sindex.emplace_back();
            xs.emplace_back();
            ys.emplace_back();
        }
        const std::size_t i = git->second;
        auto [sit, sfresh] = sindex[i].emplace(row[cs], data.groups[i].labels.size());
        if (sfresh) {
            data.groups[i].labels.push_back(row[cs]);
            xs[i].emplace_back();
            ys[i].emplace_back();
        }
        xs[i][sit->second].push_back(parse_double(row[cx], line, "x"));
        ys[i][sit->second].push_back(parse_double(row[cy], line, "y"));
    }
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        for (std::size_t j = 0; j < xs[i].size(); ++j) data.groups[i].cells.push_back({to_vector(xs[i][j]), to_vector(ys[i][j])});
    }
    validate(data);
    return data;
}

ThreeLevelDataset read_three_level_csv(const std::string& path)
{
    auto in = open_in(path);
    return read_three_level_csv(in);
}

void write_three_level_csv(std::ostream& out, const ThreeLevelDataset& data)
{
    validate(data);
    const FullPrecision fp(out);
    out << "group,subgroup,x,y\n";
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        const auto& g = data.groups[i];
        for (std::size_t j = 0; j < g.cells.size(); ++j) {
            for (Eigen::Index k = 0; k < g.cells[j].x.size(); ++k) {
                out << data.labels[i] << ',' << g.labels[j] << ',' << g.cells[j].x[k] << ',' << g.cells[j].y[k] << '\n';
            }
        }
    }
}

void write_three_level_csv(const std::string& path, const ThreeLevelDataset& data)
{
    auto out = open_out(path);
    write_three_level_csv(out, data);
}

void write_band_csv(std::ostream& out, const CurveBand& band)
{
    const FullPrecision fp(out);
    out << "x,mean,sd,lower,upper\n";
    for (Eigen::Index k = 0; k < band.x.size(); ++k) {
        out << band.x[k] << ',' << band.mean[k] << ',' << band.sd[k] << ',' << band.lower[k] << ',' << band.upper[k]
            << '\n';
    }
}

void write_band_csv(const std::string& path, const CurveBand& band)
{
    auto out = open_out(path);
    write_band_csv(out, band);
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRecord>& records)
{
    out << "m,variant,mean_s,sd_s\n";
    for (const auto& r : records) out << r.m << ',' << to_string(r.variant) << ',' << r.mean_seconds << ',' << r.sd_seconds << '\n';
}

json to_json(const BenchmarkResult& res)
{
    json recs = json::array();
    for (const auto& r : res.records) {
        recs.push_back({{"m", r.m},
                        {"variant", to_string(r.variant)},
                        {"mean_s", r.mean_seconds},
                        {"sd_s", r.sd_seconds},
                        {"iterations", r.iterations},
                        {"replications", r.replications},
                        {"parallel", r.parallel}});
    }
    json j = {{"records", recs}, {"naive_skipped", res.naive_skipped}, {"slope_streamlined", res.slope_streamlined}};
    j["slope_naive"] = std::isfinite(res.slope_naive) ? json(res.slope_naive) : json(nullptr);
    return j;
}

VectorXd read_grid(const std::string& path)
{
    auto in = open_in(path);
    std::vector<double> v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto fields = split_line(line);
        if (fields.empty() || fields.front().empty()) continue;
        if (lineno == 1 && fields.front() == "x") continue;
        v.push_back(parse_double(fields.front(), lineno, "x"));
    }
    if (v.empty()) throw ValidationError("grid file '" + path + "' is empty");
    return to_vector(v);
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

int FitArtifact::level() const
{
    return std::holds_alternative<MfvbFitTwoLevel>(fit) || std::holds_alternative<BlupFitTwoLevel>(fit) ? 2 : 3;
}

bool FitArtifact::is_mfvb() const
{
    return std::holds_alternative<MfvbFitTwoLevel>(fit) || std::holds_alternative<MfvbFitThreeLevel>(fit);
}

bool FitArtifact::is_contrast() const
{
    if (const auto* f = std::get_if<MfvbFitTwoLevel>(&fit)) return f->model.layout == Layout::Contrast;
    if (const auto* f = std::get_if<BlupFitTwoLevel>(&fit)) return f->model.layout == Layout::Contrast;
    return false;
}

json to_json(const FitArtifact& art)
{
    json j = {{"format_version", kArtifactFormatVersion},
              {"level", art.level()},
              {"method", art.is_mfvb() ? "mfvb" : "blup"}};
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, MfvbFitTwoLevel> || std::is_same_v<T, MfvbFitThreeLevel>) {
                j["fit"] = fit_json(f);
            } else {
                j["fit"] = {{"model", model_json(f.model)}, {"variances", var_json(f.var)}, {"coef", coef_json(f.coef)}};
            }
        },
        art.fit);
    return j;
}

FitArtifact artifact_from_json(const json& j)
{
    return guarded([&] {
        if (!j.contains("format_version")) throw ValidationError("artifact has no format_version");
        const auto version = j.at("format_version").get<std::string>();
        if (parse_major(version) != kArtifactMajorVersion) {
            throw ValidationError("unsupported artifact format version '" + version + "'");
        }
        const int level = j.at("level").get<int>();
        const auto method = j.at("method").get<std::string>();
        const auto& f = j.at("fit");
        FitArtifact art;
        if (level == 2 && method == "mfvb") {
            art.fit = mfvb_two_from(f);
        } else if (level == 3 && method == "mfvb") {
            art.fit = mfvb_three_from(f);
        } else if (level == 2 && method == "blup") {
            BlupFitTwoLevel b;
            b.model = two_model_from(f.at("model"));
            b.var = variances_two_level_from_json(f.at("variances"));
            b.coef = two_coef_from(f.at("coef"));
            art.fit = std::move(b);
        } else if (level == 3 && method == "blup") {
            BlupFitThreeLevel b;
            b.model = three_model_from(f.at("model"));
            b.var = variances_three_level_from_json(f.at("variances"));
            b.coef = three_coef_from(f.at("coef"));
            art.fit = std::move(b);
        } else {
            throw ValidationError("unknown artifact kind: level " + std::to_string(level) + ", method '" + method + "'");
        }
        return art;
    });
}

void save_artifact(const std::string& path, const FitArtifact& art)
{
    auto out = open_out(path);
    out << to_json(art).dump(1) << '\n';
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

FitArtifact load_artifact(const std::string& path)
{
    return artifact_from_json(read_json_file(path));
}

json read_json_file(const std::string& path)
{
    auto in = open_in(path);
    return guarded([&] { return json::parse(in); });
}

const SplineBasis& global_basis(const FitArtifact& art)
{
    return std::visit([](const auto& f) -> const SplineBasis& { return f.model.gbl_basis; }, art.fit);
}

CurveBand predict_band(const FitArtifact& art, const VectorXd& grid, const CurveTarget& target, double level)
{
    if (art.is_contrast()) throw ValidationError("contrast fits are evaluated with contrast-curve");
    return std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, MfvbFitTwoLevel> || std::is_same_v<T, MfvbFitThreeLevel>) {
                return make_band(predict_curve(f.model, f.state.coef, grid, target), level);
            } else {
                return make_band(predict_curve(f.model, f.coef, grid, target), level);
            }
        },
        art.fit);
}

HyperparametersTwoLevel hyper_two_level_from_json(const json& j, int d)
{
    return guarded([&] {
        reject_unknown(j, {"mu_beta", "Sigma_beta", "nu_eps", "s_eps", "nu_gbl", "s_gbl", "nu_grp", "s_grp", "nu_Sigma", "s_Sigma"},
                       "hyperparameters");
        auto h = HyperparametersTwoLevel::defaults(d);
        maybe_vec(j, "mu_beta", h.mu_beta);
        maybe_mat(j, "Sigma_beta", h.Sigma_beta);
        maybe(j, "nu_eps", h.nu_eps);
        maybe(j, "s_eps", h.s_eps);
        maybe(j, "nu_gbl", h.nu_gbl);
        maybe(j, "s_gbl", h.s_gbl);
        maybe(j, "nu_grp", h.nu_grp);
        maybe(j, "s_grp", h.s_grp);
        maybe(j, "nu_Sigma", h.nu_Sigma);
        maybe_vec(j, "s_Sigma", h.s_Sigma);
        validate(h, d);
        return h;
    });
}

HyperparametersThreeLevel hyper_three_level_from_json(const json& j)
{
    return guarded([&] {
        reject_unknown(j, {"mu_beta", "Sigma_beta", "nu_eps", "s_eps", "nu_gbl", "s_gbl", "nu_grp_g", "s_grp_g",
                           "nu_grp_h", "s_grp_h", "nu_Sigma_g", "s_Sigma_g", "nu_Sigma_h", "s_Sigma_h"},
                       "hyperparameters");
        auto h = HyperparametersThreeLevel::defaults();
        maybe_vec(j, "mu_beta", h.mu_beta);
        maybe_mat(j, "Sigma_beta", h.Sigma_beta);
        maybe(j, "nu_eps", h.nu_eps);
        maybe(j, "s_eps", h.s_eps);
        maybe(j, "nu_gbl", h.nu_gbl);
        maybe(j, "s_gbl", h.s_gbl);
        maybe(j, "nu_grp_g", h.nu_grp_g);
        maybe(j, "s_grp_g", h.s_grp_g);
        maybe(j, "nu_grp_h", h.nu_grp_h);
        maybe(j, "s_grp_h", h.s_grp_h);
        maybe(j, "nu_Sigma_g", h.nu_Sigma_g);
        maybe_vec(j, "s_Sigma_g", h.s_Sigma_g);
        maybe(j, "nu_Sigma_h", h.nu_Sigma_h);
        maybe_vec(j, "s_Sigma_h", h.s_Sigma_h);
        validate(h);
        return h;
    });
}

VarianceParamsTwoLevel variances_two_level_from_json(const json& j)
{
    return guarded([&] {
        reject_unknown(j, {"sigma_eps_sq", "sigma_gbl_sq", "sigma_grp_sq", "Sigma"}, "variances");
        VarianceParamsTwoLevel v;
        maybe(j, "sigma_eps_sq", v.sigma_eps_sq);
        maybe(j, "sigma_gbl_sq", v.sigma_gbl_sq);
        maybe(j, "sigma_grp_sq", v.sigma_grp_sq);
        maybe_mat(j, "Sigma", v.Sigma);
        validate(v);
        return v;
    });
}

VarianceParamsThreeLevel variances_three_level_from_json(const json& j)
{
    return guarded([&] {
        reject_unknown(j, {"sigma_eps_sq", "sigma_gbl_sq", "sigma_grp_g_sq", "sigma_grp_h_sq", "Sigma_g", "Sigma_h"},
                       "variances");
        VarianceParamsThreeLevel v;
        maybe(j, "sigma_eps_sq", v.sigma_eps_sq);
        maybe(j, "sigma_gbl_sq", v.sigma_gbl_sq);
        maybe(j, "sigma_grp_g_sq", v.sigma_grp_g_sq);
        maybe(j, "sigma_grp_h_sq", v.sigma_grp_h_sq);
        maybe_mat(j, "Sigma_g", v.Sigma_g);
        maybe_mat(j, "Sigma_h", v.Sigma_h);
        validate(v);
        return v;
    });
}

} // namespace curvestream
