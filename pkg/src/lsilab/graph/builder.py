from typing import Any

from langgraph.graph import END, StateGraph

from .nodes import (
    handle_error,
    load_experiment,
    load_solution,
    run_checks,
    run_demo,
    simulate_ensemble,
    solve_gamma,
    write_reports,
)
from .state import PipelineState


def check_for_errors(state: PipelineState) -> str:
    """If an error is present, route to the error handler. Otherwise, continue."""
    if state.get("error_message"):
        return "handle_error"
    return "continue"


def route_by_command(state: PipelineState) -> str:
    """Picks the first stage of the requested subcommand."""
    if state.get("error_message"):
        return "handle_error"
    command = state.get("command")
    if command == "demo-nonuniqueness":
        return "run_demo"
    if command in ("simulate", "check"):
        return "load_solution"
    return "solve_gamma"


def route_after_solve(state: PipelineState) -> str:
    if state.get("error_message"):
        return "handle_error"
    return "write_reports" if state.get("command") == "solve" else "simulate_ensemble"


def route_after_simulate(state: PipelineState) -> str:
    if state.get("error_message"):
        return "handle_error"
    return "write_reports" if state.get("command") == "simulate" else "run_checks"


def route_after_checks(state: PipelineState) -> str:
    if state.get("error_message"):
        return "handle_error"
    return "run_demo" if state.get("command") == "all" else "write_reports"


def build_graph() -> Any:
    """
    Creates the experiment pipeline:
    load_experiment -> solve_gamma | load_solution -> simulate_ensemble
    -> run_checks -> run_demo -> write_reports, entering and leaving the
    chain where the subcommand asks.
    """
    workflow = StateGraph(PipelineState)

    workflow.add_node("load_experiment", load_experiment)
    workflow.add_node("solve_gamma", solve_gamma)
    workflow.add_node("load_solution", load_solution)
    workflow.add_node("simulate_ensemble", simulate_ensemble)
    workflow.add_node("run_checks", run_checks)
    workflow.add_node("run_demo", run_demo)
    workflow.add_node("write_reports", write_reports)
    workflow.add_node("handle_error", handle_error)

    workflow.set_entry_point("load_experiment")

    workflow.add_conditional_edges(
        "load_experiment",
        route_by_command,
        {
            "solve_gamma": "solve_gamma",
            "load_solution": "load_solution",
            "run_demo": "run_demo",
            "handle_error": "handle_error",
        },
    )
    workflow.add_conditional_edges(
        "solve_gamma",
        route_after_solve,
        {
            "simulate_ensemble": "simulate_ensemble",
            "write_reports": "write_reports",
            "handle_error": "handle_error",
        },
    )
    workflow.add_conditional_edges(
        "load_solution",
        check_for_errors,
        {"continue": "simulate_ensemble", "handle_error": "handle_error"},
    )
    workflow.add_conditional_edges(
        "simulate_ensemble",
        route_after_simulate,
        {
            "run_checks": "run_checks",
            "write_reports": "write_reports",
            "handle_error": "handle_error",
        },
    )
    workflow.add_conditional_edges(
        "run_checks",
        route_after_checks,
        {
            "run_demo": "run_demo",
            "write_reports": "write_reports",
            "handle_error": "handle_error",
        },
    )
    workflow.add_conditional_edges(
        "run_demo",
        check_for_errors,
        {"continue": "write_reports", "handle_error": "handle_error"},
    )
    workflow.add_conditional_edges(
        "write_reports",
        check_for_errors,
        {"continue": END, "handle_error": "handle_error"},
    )
    workflow.add_edge("handle_error", END)

    return workflow.compile()
