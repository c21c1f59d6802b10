//! Oracle maxima computed once by exhaustive enumeration and frozen.

use envdesign_core::agents::AgentKind;
use envdesign_core::hard_maze::shortest_path_length;
use envdesign_core::oracle::brute_force_max_maze;

fn check(side: usize, agent: AgentKind, score: f64, walls: u64) {
    let (map, best) = brute_force_max_maze(side, agent, 8 * side * side).unwrap();
    assert_eq!(best, score, "{side}x{side} {agent}");
    assert_eq!(map.to_bits(), walls, "{side}x{side} {agent}: {map:?}");
}

#[test]
fn three_by_three_optimal() {
    check(3, AgentKind::Optimal, 4.0, 0);
}

#[test]
fn four_by_four_maxima() {
    check(4, AgentKind::Optimal, 6.0, 0);
    let (dfs, score) = brute_force_max_maze(4, AgentKind::Dfs, 128).unwrap();
    assert_eq!(score, 16.0);
    assert!(shortest_path_length(&dfs).is_some());
    let (_, score) = brute_force_max_maze(4, AgentKind::Rhs, 128).unwrap();
    assert_eq!(score, 16.0);
}

#[test]
fn five_by_five_maxima() {
    check(5, AgentKind::Optimal, 16.0, 983520);
    check(5, AgentKind::Dfs, 28.0, 856128);
    check(5, AgentKind::Rhs, 28.0, 8720704);
}
