#pragma once

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace fsstab {

using Vec2 = Eigen::Vector2d;

enum class SolidShape { Disk, Ellipse };

// Container disk of radius b centered at the origin, solid centered at the
// origin with dist(boundary, container boundary) > 0.
struct GeometryConfig {
    double container_radius = 1.0;   // b
    SolidShape solid_shape = SolidShape::Disk;
    double solid_radius = 0.3;       // a (disk)
    double semi_axis_x = 0.3;        // ellipse only
    double semi_axis_y = 0.15;
    double solid_density = 1.0;      // rho_S
    double viscosity = 1.0;          // nu
    double mesh_size = 0.1;          // h
    double quality_floor_deg = 15.0; // minimum triangle angle accepted

    double gap() const;              // dist(container boundary, solid)
    double tol_geom() const;         // 10 h^2 scaled by the domain diameter
    Vec2 solid_boundary_point(double theta) const;
};

// Validates the raw config. Throws GapViolation / CentroidError /
// ConfigError on bad input; returns the config unchanged otherwise.
GeometryConfig build_geometry(const GeometryConfig& raw);

// Region tags for triangles and boundary edges of the plain-text format.
inline constexpr int kTagFluid = 0;
inline constexpr int kTagSolid = 1;
inline constexpr int kTagOuter = 10;
inline constexpr int kTagInterface = 11;

struct Triangle {
    std::array<int, 3> v;
    int tag;  // kTagFluid or kTagSolid
};

struct BoundaryEdge {
    std::array<int, 2> v;
    int tag;        // kTagOuter or kTagInterface
    Vec2 normal;    // unit normal pointing out of the fluid region
    int fluid_tri;  // adjacent fluid triangle
};

// Conforming triangulation of the solid and of the annular fluid region.
// Interface vertices are shared by both regions; every interface edge has
// exactly one fluid and one solid triangle on its sides. Immutable once built.
struct Mesh {
    std::vector<Vec2> vertices;
    std::vector<Triangle> triangles;
    std::vector<BoundaryEdge> boundary_edges;
    double mesh_size = 0.0;  // generation target h (0 if imported)

    int num_vertices() const { return static_cast<int>(vertices.size()); }

    double min_angle_deg() const;
    double region_area(int tag) const;
    std::vector<int> boundary_vertex_ids(int tag) const;  // incl. edge endpoints only

    void write(std::ostream& os) const;
    static Mesh read(std::istream& is);
    void save(const std::string& path) const;
    static Mesh load(const std::string& path);
};

// Meshes both regions with target element size h. Throws MeshingFailure if the
// result violates the quality floor.
Mesh generate_mesh(const GeometryConfig& config);

// Validates structural invariants of an (imported) mesh: orientation, tags,
// interface sharing, quality. Normals are recomputed from adjacency.
void validate_mesh(Mesh& mesh, double quality_floor_deg);

struct RigidBodyData {
    double mass = 0.0;      // M = rho_S * area(S)
    double inertia = 0.0;   // I0 = rho_S * integral |y|^2
    Vec2 centroid = Vec2::Zero();
};

// Quadrature over the solid region. Throws CentroidError if the solid
// centroid exceeds the geometric tolerance.
RigidBodyData solid_moments(const Mesh& mesh, double rho_s, double tol_geom);

}  // namespace fsstab
