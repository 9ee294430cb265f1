/* tslint:disable */
/* eslint-disable */

export function gd_path(rho: number, x: number, y: number, lr: number, steps: number): Float64Array;

export function gg_path(rho: number, start: Float64Array, steps: number, alpha: number, epsilon: number): Float64Array;

export function one_step_residuals(rhos: Float64Array, start: Float64Array): Float64Array;

export function step_sizes(rho: number, points: Float64Array, epsilon: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly gd_path: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly gg_path: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly one_step_residuals: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly step_sizes: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
