fn main() {
    let m = avatar_core::geom::shapes::icosphere_net_atlas(0.5, 3).unwrap();
    let moved: Vec<avatar_core::math::V3> = m.vertices().iter()
        .map(|v| v.add(&avatar_core::math::Vec3::new(0.0, 0.0, std::env::args().nth(1).map(|a| a.parse().unwrap()).unwrap_or(3.0)))).collect();
    let m = m.with_vertices(moved).unwrap();
    print!("{}", avatar_cli::obj::obj_string(&m));
}
