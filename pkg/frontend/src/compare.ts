/** Before/after comparison panes with a single shared viewport.
 *
 * Both panes (reference on the left, generation on the right) render under
 * one transform object, so zooming or panning either side moves both in
 * lockstep — the panes cannot drift apart because there is only one source
 * of truth for the transform.
 */

export interface ViewTransform {
  scale: number;
  tx: number;
  ty: number;
}

export type PaneApply = (transform: Readonly<ViewTransform>) => void;

const MIN_SCALE = 0.1;
const MAX_SCALE = 40;

export class SyncedViewport {
  private state: ViewTransform = { scale: 1, tx: 0, ty: 0 };
  private readonly panes: PaneApply[] = [];

  get transform(): Readonly<ViewTransform> {
    return { ...this.state };
  }

  /** CSS for a pane content element with `transform-origin: 0 0`. */
  cssTransform(): string {
    const { scale, tx, ty } = this.state;
    return `translate(${tx}px, ${ty}px) scale(${scale})`;
  }

  attach(apply: PaneApply): void {
    this.panes.push(apply);
    apply(this.transform);
  }

  /** Zoom by `factor`, keeping the content under (px, py) fixed on screen. */
  zoomAt(px: number, py: number, factor: number): void {
    const next = Math.min(Math.max(this.state.scale * factor, MIN_SCALE), MAX_SCALE);
    const applied = next / this.state.scale;
    this.state = {
      scale: next,
      tx: px - (px - this.state.tx) * applied,
      ty: py - (py - this.state.ty) * applied,
    };
    this.broadcast();
  }

  panBy(dx: number, dy: number): void {
    this.state = { ...this.state, tx: this.state.tx + dx, ty: this.state.ty + dy };
    this.broadcast();
  }

  reset(): void {
    this.state = { scale: 1, tx: 0, ty: 0 };
    this.broadcast();
  }

  /** Screen point -> content coordinates under the current transform. */
  toContent(px: number, py: number): { x: number; y: number } {
    return {
      x: (px - this.state.tx) / this.state.scale,
      y: (py - this.state.ty) / this.state.scale,
    };
  }

  private broadcast(): void {
    for (const apply of this.panes) apply(this.transform);
  }
}
