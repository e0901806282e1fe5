/** Client-side shaded wireframe of the service's mesh payload.
 *
 * The geometry arrives fully posed from `GET /mesh.json`; this module only
 * projects it for display (orthographic front view, painter's algorithm,
 * Lambert shading) and never re-derives body shape on the client.
 */

export interface MeshPayload {
  vertices: number[][];
  faces: number[][];
}

export interface ScenePolygon {
  /** Canvas-space corner coordinates, [x, y] each. */
  points: [number, number][];
  /** Mean camera-space depth; larger is farther. */
  depth: number;
  /** Lambert intensity in [0, 1]. */
  shade: number;
}

export interface MeshScene {
  polygons: ScenePolygon[];
  width: number;
  height: number;
}

const LIGHT = normalize([0.35, 0.5, 1.0]);
const MARGIN = 0.05;

function normalize(v: number[]): [number, number, number] {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}

/** Project the mesh into canvas space; polygons come back far-to-near. */
export function buildMeshScene(mesh: MeshPayload, width: number, height: number): MeshScene {
  const { vertices, faces } = mesh;
  if (vertices.length === 0) return { polygons: [], width, height };

  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const [x, y] of vertices) {
    minX = Math.min(minX, x);
    maxX = Math.max(maxX, x);
    minY = Math.min(minY, y);
    maxY = Math.max(maxY, y);
  }
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  const usableW = width * (1 - 2 * MARGIN);
  const usableH = height * (1 - 2 * MARGIN);
  const scale = Math.min(usableW / spanX, usableH / spanY);
  const offX = (width - scale * spanX) / 2;
  const offY = (height - scale * spanY) / 2;

  // Front view: +x right, +y up (flipped for canvas), depth along -z so the
  // camera looks at the body the way the conditioning render does.
  const projected: [number, number][] = vertices.map(([x, y]) => [
    offX + (x - minX) * scale,
    offY + (maxY - y) * scale,
  ]);

  const polygons: ScenePolygon[] = faces.map((face) => {
    const [a, b, c] = face;
    const va = vertices[a];
    const vb = vertices[b];
    const vc = vertices[c];
    const e1 = [vb[0] - va[0], vb[1] - va[1], vb[2] - va[2]];
    const e2 = [vc[0] - va[0], vc[1] - va[1], vc[2] - va[2]];
    const n = normalize([
      e1[1] * e2[2] - e1[2] * e2[1],
      e1[2] * e2[0] - e1[0] * e2[2],
      e1[0] * e2[1] - e1[1] * e2[0],
    ]);
    // Two-sided shading: winding direction must not black out faces.
    const lambert = Math.abs(n[0] * LIGHT[0] + n[1] * LIGHT[1] + n[2] * LIGHT[2]);
    const depth = -(va[2] + vb[2] + vc[2]) / 3;
    return {
      points: [projected[a], projected[b], projected[c]],
      depth,
      shade: 0.15 + 0.85 * lambert,
    };
  });

  polygons.sort((p, q) => q.depth - p.depth);
  return { polygons, width, height };
}

/** Paint a scene onto a 2D canvas context (browser-only). */
export function drawMeshScene(ctx: CanvasRenderingContext2D, scene: MeshScene): void {
  ctx.clearRect(0, 0, scene.width, scene.height);
  ctx.lineWidth = 0.5;
  for (const poly of scene.polygons) {
    const level = Math.round(255 * poly.shade);
    ctx.beginPath();
    ctx.moveTo(poly.points[0][0], poly.points[0][1]);
    ctx.lineTo(poly.points[1][0], poly.points[1][1]);
    ctx.lineTo(poly.points[2][0], poly.points[2][1]);
    ctx.closePath();
    ctx.fillStyle = `rgb(${level}, ${level}, ${level})`;
    ctx.strokeStyle = "rgba(30, 30, 30, 0.6)";
    ctx.fill();
    ctx.stroke();
  }
}
