from setuptools import setup, find_packages

setup(
    name="relation_cp",
    author="Vedant Gupta",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples*"]),
    install_requires=[
        "python-dotenv==1.1.1",
        "structlog==25.4.0",
        "PyYAML",
        "pydantic>=2.7",
        "pandas",
        "numpy",
        "torch>=2.1",
        "typer",
        "scipy",
    ],
    entry_points={"console_scripts": ["relcp=cli.main:app"]},
)
